use serde::Serialize;

/// Virtual-time charges in nanoseconds. Each worker advances its own clock by
/// these amounts; makespans are taken over worker clocks, so timing results
/// are reproducible regardless of host load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostModel {
    pub atomic_op: f64,
    /// Fixed cost of dispatching one activity outside a transaction.
    pub activity_overhead: f64,
    pub txn_begin: f64,
    pub txn_commit: f64,
    /// Per distinct cell touched by a transaction attempt.
    pub txn_access: f64,
    pub abort_penalty: f64,
    /// Acquiring and releasing the global fallback lock.
    pub serial_overhead: f64,
    /// Non-transactional read, e.g. a pre-transaction visited check.
    pub plain_read: f64,
    /// Fixed cost of sending one network batch.
    pub batch_cost: f64,
    /// Per message inside a batch.
    pub message_cost: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            atomic_op: 20.0,
            activity_overhead: 5.0,
            txn_begin: 60.0,
            txn_commit: 60.0,
            txn_access: 4.0,
            abort_penalty: 100.0,
            serial_overhead: 200.0,
            plain_read: 2.0,
            batch_cost: 0.0,
            message_cost: 0.0,
        }
    }
}

impl CostModel {
    /// Default charges with a synthetic network: per-batch and per-message
    /// costs enabled.
    pub fn with_network(batch_cost: f64, message_cost: f64) -> Self {
        CostModel { batch_cost, message_cost, ..Self::default() }
    }

    pub fn batch(&self, messages: usize) -> f64 {
        self.batch_cost + self.message_cost * messages as f64
    }
}
