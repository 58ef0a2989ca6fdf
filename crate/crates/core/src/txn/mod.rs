//! Software-emulated hardware transactions over versioned cells, the
//! non-transactional atomics baseline, retry policies and run statistics.

mod atomics;
mod cost;
mod heap;
mod policy;
mod stats;
pub mod step;
#[allow(clippy::module_inception)]
mod txn;
mod worker;

use thiserror::Error;

pub use atomics::AccOp;
pub use cost::CostModel;
pub use heap::{CellRef, Heap, HeapBuilder, LockState, Region, Word};
pub use policy::{CapacityProfile, ExpBackoff, Mechanism, PolicyKind, RetryPolicy};
pub use stats::{RunStats, StatsSnapshot};
pub use txn::{Txn, TxnCtx, TxnMode, TxnStatus};
pub use worker::{AtomicCtx, Outcome, Worker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum AbortReason {
    MemoryConflict,
    BufferOverflow,
    Other,
}

/// Early exit from a transaction body.
#[derive(Debug, Clone, PartialEq)]
pub enum TxnSignal {
    /// Hardware-level abort; the executor retries per policy.
    Abort(AbortReason),
    /// Non-transactional error; rolled back and propagated to the caller.
    Fault(String),
}

impl From<AbortReason> for TxnSignal {
    fn from(r: AbortReason) -> Self {
        TxnSignal::Abort(r)
    }
}

pub type TxResult<T> = Result<T, TxnSignal>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TxnError {
    #[error("transaction body fault: {0}")]
    Fault(String),
    #[error("unknown policy '{0}' (expected rtm, hle, bgq-short, bgq-long, atomics or locks)")]
    UnknownPolicy(String),
}
