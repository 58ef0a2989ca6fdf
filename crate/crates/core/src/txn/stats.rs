use std::sync::atomic::{AtomicU64, Ordering::Relaxed};

use serde::Serialize;

use super::AbortReason;

/// Shared run counters. Updated with relaxed atomics from any worker.
#[derive(Debug)]
pub struct RunStats {
    commits: AtomicU64,
    aborts_conflict: AtomicU64,
    aborts_capacity: AtomicU64,
    aborts_other: AtomicU64,
    total_aborts: AtomicU64,
    serializations: AtomicU64,
    operator_failures: AtomicU64,
    atomic_ops: AtomicU64,
    max_committed_footprint: AtomicU64,
    min_overflow_footprint: AtomicU64,
    overflow_below_capacity: AtomicU64,
}

impl RunStats {
    pub fn new() -> Self {
        let zero = || AtomicU64::new(0);
        RunStats {
            commits: zero(),
            aborts_conflict: zero(),
            aborts_capacity: zero(),
            aborts_other: zero(),
            total_aborts: zero(),
            serializations: zero(),
            operator_failures: zero(),
            atomic_ops: zero(),
            max_committed_footprint: zero(),
            min_overflow_footprint: AtomicU64::new(u64::MAX),
            overflow_below_capacity: zero(),
        }
    }

    pub fn record_commit(&self, footprint: usize) {
        self.commits.fetch_add(1, Relaxed);
        self.max_committed_footprint.fetch_max(footprint as u64, Relaxed);
    }

    /// `footprint` is the attempted size: for an overflow, the cell count the
    /// transaction would have reached.
    pub fn record_abort(&self, reason: AbortReason, footprint: usize, capacity: usize) {
        self.total_aborts.fetch_add(1, Relaxed);
        match reason {
            AbortReason::MemoryConflict => self.aborts_conflict.fetch_add(1, Relaxed),
            AbortReason::BufferOverflow => {
                self.min_overflow_footprint.fetch_min(footprint as u64, Relaxed);
                if footprint <= capacity {
                    self.overflow_below_capacity.fetch_add(1, Relaxed);
                }
                self.aborts_capacity.fetch_add(1, Relaxed)
            }
            AbortReason::Other => self.aborts_other.fetch_add(1, Relaxed),
        };
    }

    pub fn record_serialization(&self) {
        self.serializations.fetch_add(1, Relaxed);
    }

    pub fn record_operator_failures(&self, n: u64) {
        self.operator_failures.fetch_add(n, Relaxed);
    }

    pub fn record_atomic_ops(&self, n: u64) {
        self.atomic_ops.fetch_add(n, Relaxed);
    }

    pub fn merge(&self, other: &StatsSnapshot) {
        self.commits.fetch_add(other.commits, Relaxed);
        self.aborts_conflict.fetch_add(other.aborts_conflict, Relaxed);
        self.aborts_capacity.fetch_add(other.aborts_capacity, Relaxed);
        self.aborts_other.fetch_add(other.aborts_other, Relaxed);
        self.total_aborts.fetch_add(other.total_aborts, Relaxed);
        self.serializations.fetch_add(other.serializations, Relaxed);
        self.operator_failures.fetch_add(other.operator_failures, Relaxed);
        self.atomic_ops.fetch_add(other.atomic_ops, Relaxed);
        self.max_committed_footprint.fetch_max(other.max_committed_footprint, Relaxed);
        if let Some(m) = other.min_overflow_footprint {
            self.min_overflow_footprint.fetch_min(m, Relaxed);
        }
        self.overflow_below_capacity.fetch_add(other.overflow_below_capacity, Relaxed);
    }

    pub fn snapshot(&self) -> StatsSnapshot {
        let min_over = self.min_overflow_footprint.load(Relaxed);
        StatsSnapshot {
            commits: self.commits.load(Relaxed),
            aborts_conflict: self.aborts_conflict.load(Relaxed),
            aborts_capacity: self.aborts_capacity.load(Relaxed),
            aborts_other: self.aborts_other.load(Relaxed),
            total_aborts: self.total_aborts.load(Relaxed),
            serializations: self.serializations.load(Relaxed),
            operator_failures: self.operator_failures.load(Relaxed),
            atomic_ops: self.atomic_ops.load(Relaxed),
            max_committed_footprint: self.max_committed_footprint.load(Relaxed),
            min_overflow_footprint: (min_over != u64::MAX).then_some(min_over),
            overflow_below_capacity: self.overflow_below_capacity.load(Relaxed),
        }
    }
}

impl Default for RunStats {
    fn default() -> Self {
        Self::new()
    }
}

/// Point-in-time copy of [`RunStats`]. `total_aborts` is its own counter, not
/// the sum of the per-reason ones, so the identity is checkable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StatsSnapshot {
    pub commits: u64,
    pub aborts_conflict: u64,
    pub aborts_capacity: u64,
    pub aborts_other: u64,
    pub total_aborts: u64,
    pub serializations: u64,
    pub operator_failures: u64,
    pub atomic_ops: u64,
    /// Largest footprint of any speculative commit.
    pub max_committed_footprint: u64,
    /// Smallest attempted footprint among overflow aborts.
    pub min_overflow_footprint: Option<u64>,
    /// Overflow aborts raised at or below capacity; always zero when correct.
    pub overflow_below_capacity: u64,
}

impl StatsSnapshot {
    pub fn accounting_holds(&self) -> bool {
        self.aborts_conflict + self.aborts_capacity + self.aborts_other == self.total_aborts
    }

    /// Overflow happened only past capacity and no commit exceeded it.
    pub fn capacity_consistent(&self, capacity: usize) -> bool {
        let cap = capacity as u64;
        self.max_committed_footprint <= cap
            && self.overflow_below_capacity == 0
            && self.min_overflow_footprint.map_or(self.aborts_capacity == 0, |m| m > cap)
    }

    pub fn since(&self, earlier: &StatsSnapshot) -> StatsSnapshot {
        StatsSnapshot {
            commits: self.commits - earlier.commits,
            aborts_conflict: self.aborts_conflict - earlier.aborts_conflict,
            aborts_capacity: self.aborts_capacity - earlier.aborts_capacity,
            aborts_other: self.aborts_other - earlier.aborts_other,
            total_aborts: self.total_aborts - earlier.total_aborts,
            serializations: self.serializations - earlier.serializations,
            operator_failures: self.operator_failures - earlier.operator_failures,
            atomic_ops: self.atomic_ops - earlier.atomic_ops,
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_capacity() {
        let s = RunStats::new();
        s.record_commit(3);
        s.record_abort(AbortReason::MemoryConflict, 2, 4);
        s.record_abort(AbortReason::BufferOverflow, 5, 4);
        s.record_abort(AbortReason::Other, 1, 4);
        let snap = s.snapshot();
        assert_eq!(snap.total_aborts, 3);
        assert!(snap.accounting_holds());
        assert!(snap.capacity_consistent(4));
        assert!(!snap.capacity_consistent(5));
    }

    #[test]
    fn fresh_stats_are_consistent() {
        let snap = RunStats::new().snapshot();
        assert_eq!(snap.min_overflow_footprint, None);
        assert!(snap.capacity_consistent(1));
    }
}
