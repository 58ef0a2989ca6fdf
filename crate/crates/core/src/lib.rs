//! Atomic active messages: graph operators executed as coarsened,
//! software-emulated hardware transactions and dispatched as active messages
//! over a simulated distributed-memory machine.

pub mod graph;
pub mod txn;
pub mod net;
pub mod runtime;
pub mod algorithms;
pub mod model;
pub mod bench;
