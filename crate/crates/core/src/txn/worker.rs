use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::heap::{backoff_spin, CellRef, Heap, Word};
use super::{AbortReason, AccOp, CostModel, RetryPolicy, RunStats, TxResult, TxnCtx, TxnError, TxnSignal};

/// Result of running a body to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome<R> {
    pub value: R,
    /// Committed under the global fallback lock.
    pub serialized: bool,
    /// Aborted attempts before the successful one.
    pub aborts: u32,
}

/// An executing thread: owns a seeded RNG and a virtual clock, and reports
/// into shared [`RunStats`].
#[derive(Debug)]
pub struct Worker {
    id: usize,
    rng: ChaCha8Rng,
    clock: f64,
    cost: CostModel,
    stats: Arc<RunStats>,
    real_backoff: bool,
}

impl Worker {
    pub fn new(id: usize, seed: u64, cost: CostModel, stats: Arc<RunStats>) -> Worker {
        let seed = seed ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        Worker { id, rng: ChaCha8Rng::seed_from_u64(seed), clock: 0.0, cost, stats, real_backoff: true }
    }

    /// Disables wall-clock backoff sleeps (single-threaded deterministic runs).
    pub fn without_real_backoff(mut self) -> Self {
        self.real_backoff = false;
        self
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn stats(&self) -> &Arc<RunStats> {
        &self.stats
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    /// Virtual time consumed so far, in ns.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn charge(&mut self, ns: f64) {
        self.clock += ns;
    }

    pub fn reset_clock(&mut self) {
        self.clock = 0.0;
    }

    fn wait_serial_free(&self, heap: &Heap) {
        let mut spins = 0;
        while heap.serialized_holder().is_some() {
            backoff_spin(&mut spins);
        }
    }

    fn pause(&mut self, d: Duration) {
        self.clock += d.as_nanos() as f64;
        if !self.real_backoff || d.is_zero() {
            return;
        }
        let until = Instant::now() + d;
        while Instant::now() < until {
            std::hint::spin_loop();
        }
    }

    /// Runs `body` as a transaction under `policy`: speculative attempts until
    /// the policy's abort budget is spent, then one serialized execution.
    /// Faults roll back and are returned as errors.
    pub fn execute<R>(
        &mut self,
        heap: &Heap,
        policy: &RetryPolicy,
        mut body: impl FnMut(&mut TxnCtx<'_>) -> TxResult<R>,
    ) -> Result<Outcome<R>, TxnError> {
        let capacity = policy.capacity_cells();
        let budget = policy.serialize_after();
        let backoff = policy.backoff();
        let mut aborts = 0u32;
        while aborts < budget {
            let Some(mut tx) = heap.try_begin(capacity) else {
                self.wait_serial_free(heap);
                continue;
            };
            tx.seed_rng(self.rng.gen());
            if policy.other_abort_probability > 0.0 && self.rng.gen_bool(policy.other_abort_probability) {
                tx.doom_other();
            }
            self.clock += self.cost.txn_begin;
            let result = body(&mut TxnCtx::new(heap, &mut tx));
            let reason = match result {
                Ok(value) => match heap.txn_commit(&mut tx) {
                    Ok(()) => {
                        self.clock += self.cost.txn_commit + self.cost.txn_access * tx.footprint() as f64;
                        self.stats.record_commit(tx.footprint());
                        return Ok(Outcome { value, serialized: false, aborts });
                    }
                    Err(r) => r,
                },
                Err(TxnSignal::Abort(r)) => {
                    heap.txn_abort(&mut tx, r);
                    r
                }
                Err(TxnSignal::Fault(msg)) => {
                    heap.txn_abort(&mut tx, AbortReason::Other);
                    return Err(TxnError::Fault(msg));
                }
            };
            let attempted = tx.footprint() + usize::from(reason == AbortReason::BufferOverflow);
            self.stats.record_abort(reason, attempted, capacity);
            self.clock += self.cost.abort_penalty + self.cost.txn_access * tx.footprint() as f64;
            aborts += 1;
            if let Some(b) = backoff {
                if aborts < budget {
                    let d = b.delay(aborts, &mut self.rng);
                    self.pause(d);
                }
            }
        }
        self.stats.record_serialization();
        self.serialized(heap, &mut body, aborts)
    }

    /// Runs `body` under the global lock without speculating, as the lock
    /// baseline does. Counted as a commit, not a serialization.
    pub fn execute_locked<R>(
        &mut self,
        heap: &Heap,
        mut body: impl FnMut(&mut TxnCtx<'_>) -> TxResult<R>,
    ) -> Result<Outcome<R>, TxnError> {
        let out = self.serialized(heap, &mut body, 0)?;
        self.stats.record_commit(0);
        Ok(Outcome { serialized: false, ..out })
    }

    fn serialized<R>(
        &mut self,
        heap: &Heap,
        body: &mut impl FnMut(&mut TxnCtx<'_>) -> TxResult<R>,
        mut aborts: u32,
    ) -> Result<Outcome<R>, TxnError> {
        let mut spins = 0;
        loop {
            let ticket = loop {
                if let Some(t) = heap.try_acquire_serial() {
                    break t;
                }
                backoff_spin(&mut spins);
            };
            while !heap.serial_drained() {
                backoff_spin(&mut spins);
            }
            let mut tx = heap.begin_serial(ticket);
            tx.seed_rng(self.rng.gen());
            self.clock += self.cost.serial_overhead;
            let result = body(&mut TxnCtx::new(heap, &mut tx));
            self.clock += self.cost.txn_access * tx.footprint() as f64;
            match result {
                Ok(value) => {
                    heap.txn_commit(&mut tx).expect("serialized commit cannot fail");
                    return Ok(Outcome { value, serialized: true, aborts });
                }
                Err(TxnSignal::Abort(r)) => {
                    // only explicit aborts reach here, e.g. a claimed element
                    heap.txn_abort(&mut tx, r);
                    self.stats.record_abort(r, tx.footprint(), usize::MAX);
                    aborts += 1;
                    self.clock += self.cost.abort_penalty;
                    backoff_spin(&mut spins);
                }
                Err(TxnSignal::Fault(msg)) => {
                    heap.txn_abort(&mut tx, AbortReason::Other);
                    return Err(TxnError::Fault(msg));
                }
            }
        }
    }

    pub fn atomics<'a>(&'a mut self, heap: &'a Heap) -> AtomicCtx<'a> {
        AtomicCtx { heap, worker: self }
    }
}

/// Non-transactional access with cost and op accounting.
pub struct AtomicCtx<'a> {
    heap: &'a Heap,
    worker: &'a mut Worker,
}

impl AtomicCtx<'_> {
    fn op(&mut self) {
        self.worker.clock += self.worker.cost.atomic_op;
        self.worker.stats.record_atomic_ops(1);
    }

    pub fn cas(&mut self, c: CellRef, compare: Word, new: Word) -> bool {
        self.op();
        self.heap.atomic_cas(c, compare, new)
    }

    pub fn acc(&mut self, c: CellRef, arg: Word, op: AccOp) {
        self.op();
        self.heap.atomic_acc(c, arg, op)
    }

    pub fn fao(&mut self, c: CellRef, arg: Word, op: AccOp) -> Word {
        self.op();
        self.heap.atomic_fao(c, arg, op)
    }

    pub fn load(&mut self, c: CellRef) -> Word {
        self.worker.clock += self.worker.cost.plain_read;
        self.heap.load(c)
    }

    pub fn heap(&self) -> &Heap {
        self.heap
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.worker.rng
    }
}
