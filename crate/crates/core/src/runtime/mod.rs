//! Atomic active messages: operator registry, message classes, coarsening
//! and the per-process execution loop.

mod engine;

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::graph::{Partition, ProcessId, VertexId};
use crate::txn::{AtomicCtx, Heap, TxResult, TxnCtx};

pub use engine::{ExecMode, RunReport, Runtime, RuntimeConfig, Selection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataFlow {
    FireAndForget,
    FireAndReturn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CommitMode {
    AlwaysSucceed,
    MayFail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MessageClass {
    pub data_flow: DataFlow,
    pub commit_mode: CommitMode,
}

impl MessageClass {
    pub const FF_AS: Self = Self::new(DataFlow::FireAndForget, CommitMode::AlwaysSucceed);
    pub const FF_MF: Self = Self::new(DataFlow::FireAndForget, CommitMode::MayFail);
    pub const FR_AS: Self = Self::new(DataFlow::FireAndReturn, CommitMode::AlwaysSucceed);
    pub const FR_MF: Self = Self::new(DataFlow::FireAndReturn, CommitMode::MayFail);

    pub const fn new(data_flow: DataFlow, commit_mode: CommitMode) -> Self {
        MessageClass { data_flow, commit_mode }
    }

    pub fn returns(&self) -> bool {
        self.data_flow == DataFlow::FireAndReturn
    }

    pub fn may_fail(&self) -> bool {
        self.commit_mode == CommitMode::MayFail
    }
}

impl fmt::Display for MessageClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let df = if self.returns() { "FR" } else { "FF" };
        let cm = if self.may_fail() { "MF" } else { "AS" };
        write!(f, "{df}&{cm}")
    }
}

pub type OperatorId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AtomicMessage {
    pub class: MessageClass,
    pub target: ProcessId,
    pub operator: OperatorId,
    pub element: VertexId,
    pub param: u64,
    pub reply_to: Option<ProcessId>,
}

/// What one operator application produced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpOutput {
    /// Payload returned to the spawner of an FR message.
    pub reply: u64,
    /// Algorithm-level failure; only legal for MF classes.
    pub failed: bool,
}

impl OpOutput {
    pub const OK: OpOutput = OpOutput { reply: 0, failed: false };
    pub const FAILED: OpOutput = OpOutput { reply: 0, failed: true };

    pub fn reply(value: u64) -> OpOutput {
        OpOutput { reply: value, failed: false }
    }
}

/// Result of an FR operator, delivered to its spawner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reply {
    pub operator: OperatorId,
    pub element: VertexId,
    pub param: u64,
    pub output: OpOutput,
}

/// An operator runs at the owner of `element` inside an activity.
pub trait Operator: Send + Sync {
    fn class(&self) -> MessageClass;

    /// Transactional body. Must touch shared state only through `ctx`, and
    /// may run several times if the enclosing transaction aborts.
    fn apply(&self, ctx: &mut TxnCtx<'_>, element: VertexId, param: u64) -> TxResult<OpOutput>;

    /// Whether [`Operator::apply_atomic`] implements this operator.
    fn supports_atomics(&self) -> bool {
        false
    }

    /// Equivalent body built from single-word atomics. Operators without
    /// one run under the global lock when the atomics mechanism is chosen.
    fn apply_atomic(&self, _ctx: &mut AtomicCtx<'_>, _element: VertexId, _param: u64) -> OpOutput {
        unreachable!("operator has no atomic form")
    }

    /// Cheap non-transactional check: `true` drops a fire-and-forget message
    /// before any transaction starts.
    fn skip(&self, _heap: &Heap, _element: VertexId, _param: u64) -> bool {
        false
    }

    /// Runs once after the activity containing this application committed.
    fn committed(&self, _ctx: &mut SpawnCtx<'_>, _element: VertexId, _param: u64, _out: &OpOutput) {}
}

/// Handles replies of one FR operator at the spawner.
pub trait FailureHandler: Send + Sync {
    fn handle(&self, ctx: &mut SpawnCtx<'_>, reply: &Reply);
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("operators cannot be registered after execution started")]
    RegistrationClosed,
    #[error("unknown operator id {0}")]
    UnknownOperator(OperatorId),
    #[error("element {element} is owned by process {owner}, message targets {target}")]
    OwnerMismatch { element: VertexId, target: ProcessId, owner: ProcessId },
    #[error("fire-and-return message without reply_to")]
    MissingReplyTo,
    #[error("fire-and-forget message carries reply_to")]
    UnexpectedReplyTo,
    #[error("message class {got} does not match operator class {expected}")]
    ClassMismatch { expected: MessageClass, got: MessageClass },
    #[error("no failure handler registered for operator {0}")]
    MissingHandler(OperatorId),
    #[error("always-succeed operator {0} reported failure")]
    FailedAlwaysSucceed(OperatorId),
    #[error("operator fault: {0}")]
    Fault(String),
    #[error("no operator completed within {0:?}")]
    Watchdog(std::time::Duration),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("element {0} out of range")]
    OutOfRange(VertexId),
}

/// Spawning interface handed to after-commit hooks and failure handlers.
/// Messages are routed when the hook returns.
pub struct SpawnCtx<'a> {
    pub(crate) pid: ProcessId,
    pub(crate) heap: &'a Heap,
    pub(crate) classes: &'a [MessageClass],
    pub(crate) partition: &'a Partition,
    pub(crate) out: Vec<AtomicMessage>,
    pub(crate) error: Option<RuntimeError>,
    pub(crate) cancel: bool,
}

impl SpawnCtx<'_> {
    pub fn pid(&self) -> ProcessId {
        self.pid
    }

    pub fn heap(&self) -> &Heap {
        self.heap
    }

    /// Sends `operator` to the owner of `element`, from this process.
    pub fn spawn(&mut self, operator: OperatorId, element: VertexId, param: u64) {
        let Some(&class) = self.classes.get(operator) else {
            self.error.get_or_insert(RuntimeError::UnknownOperator(operator));
            return;
        };
        let Ok(target) = self.partition.owner(element) else {
            self.error.get_or_insert(RuntimeError::OutOfRange(element));
            return;
        };
        let reply_to = class.returns().then_some(self.pid);
        self.out.push(AtomicMessage { class, target, operator, element, param, reply_to });
    }

    /// Stops all workers at their next check; the current run returns early.
    pub fn cancel(&mut self) {
        self.cancel = true;
    }

    /// Aborts the whole run with `err`.
    pub fn fail(&mut self, err: RuntimeError) {
        self.error.get_or_insert(err);
    }
}

/// A batch of at most `M` operator applications run as one transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Activity {
    pub operators: Vec<AtomicMessage>,
}

impl Activity {
    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }
}

/// Pops up to `m` queued messages in FIFO order.
pub fn coarsen(queue: &mut VecDeque<AtomicMessage>, m: usize) -> Activity {
    let take = m.max(1).min(queue.len());
    Activity { operators: queue.drain(..take).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(element: VertexId) -> AtomicMessage {
        AtomicMessage { class: MessageClass::FF_MF, target: 0, operator: 0, element, param: 0, reply_to: None }
    }

    #[test]
    fn coarsen_sizes() {
        let mut q: VecDeque<_> = (0..10).map(msg).collect();
        let sizes: Vec<usize> = (0..3).map(|_| coarsen(&mut q, 4).len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        assert!(q.is_empty());

        let mut q: VecDeque<_> = (0..10).map(msg).collect();
        let mut n = 0;
        while !q.is_empty() {
            assert_eq!(coarsen(&mut q, 1).len(), 1);
            n += 1;
        }
        assert_eq!(n, 10);
    }

    #[test]
    fn coarsen_keeps_fifo_order() {
        let mut q: VecDeque<_> = (0..128).map(msg).collect();
        let act = coarsen(&mut q, 128);
        assert_eq!(act.len(), 128);
        assert!(act.operators.iter().enumerate().all(|(i, m)| m.element == i));
    }

    #[test]
    fn class_display() {
        assert_eq!(MessageClass::FR_MF.to_string(), "FR&MF");
        assert_eq!(MessageClass::FF_AS.to_string(), "FF&AS");
    }
}
