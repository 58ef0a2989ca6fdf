use std::sync::atomic::{AtomicU32, Ordering::SeqCst};
use std::time::Duration;

use rand::Rng;
use thiserror::Error;

use crate::graph::{ProcessId, VertexId};
use crate::txn::{AbortReason, CellRef, Heap, HeapBuilder, Region, TxResult, TxnCtx, Word};

/// Marker value of an element nobody has claimed.
pub const UNOWNED: Word = u64::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OwnershipError {
    #[error("process {pid} released element {element} held by {holder:?}")]
    NotHeld { pid: ProcessId, element: VertexId, holder: Option<ProcessId> },
}

/// Outcome of one all-or-nothing acquisition attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acquire {
    Acquired,
    /// Marker of `element` was held by someone else; nothing is held now.
    Backoff { element: VertexId },
}

/// One marker cell per element, living in the shared heap so that claiming
/// an element aborts any transaction that has read its marker.
#[derive(Debug)]
pub struct OwnershipTable {
    markers: Region,
    holders: Vec<AtomicU32>,
}

impl OwnershipTable {
    pub fn new(builder: &mut HeapBuilder, elements: usize) -> Self {
        OwnershipTable {
            markers: builder.alloc(elements, UNOWNED),
            holders: (0..elements).map(|_| AtomicU32::new(0)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.holders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.holders.is_empty()
    }

    pub fn marker(&self, v: VertexId) -> CellRef {
        self.markers.at(v)
    }

    pub fn holder(&self, heap: &Heap, v: VertexId) -> Option<ProcessId> {
        match heap.load(self.marker(v)) {
            UNOWNED => None,
            p => Some(p as ProcessId),
        }
    }

    /// CAS ⊥ → `pid` on one marker.
    pub fn try_mark(&self, heap: &Heap, pid: ProcessId, v: VertexId) -> bool {
        if !heap.atomic_cas(self.marker(v), UNOWNED, pid as Word) {
            return false;
        }
        let before = self.holders[v].fetch_add(1, SeqCst);
        assert_eq!(before, 0, "element {v} held twice (new holder {pid})");
        true
    }

    fn unmark(&self, heap: &Heap, pid: ProcessId, v: VertexId) -> Result<(), OwnershipError> {
        let current = heap.load(self.marker(v));
        if current != pid as Word {
            let holder = (current != UNOWNED).then_some(current as ProcessId);
            return Err(OwnershipError::NotHeld { pid, element: v, holder });
        }
        let before = self.holders[v].fetch_sub(1, SeqCst);
        assert_eq!(before, 1, "element {v} holder count {before} on release");
        let ok = heap.atomic_cas(self.marker(v), pid as Word, UNOWNED);
        assert!(ok, "marker of {v} changed while held by {pid}");
        Ok(())
    }

    /// Marks `elements` (ascending, distinct) for `pid`. On the first failed
    /// CAS every marker taken so far is released again.
    pub fn acquire(&self, heap: &Heap, pid: ProcessId, elements: &[VertexId]) -> Acquire {
        debug_assert!(elements.windows(2).all(|w| w[0] < w[1]), "elements must be ascending and distinct");
        for (i, &v) in elements.iter().enumerate() {
            if !self.try_mark(heap, pid, v) {
                self.release_partial(heap, pid, &elements[..i]);
                return Acquire::Backoff { element: v };
            }
        }
        Acquire::Acquired
    }

    pub(crate) fn release_partial(&self, heap: &Heap, pid: ProcessId, held: &[VertexId]) {
        for &v in held {
            self.unmark(heap, pid, v).expect("marker taken in this attempt");
        }
    }

    /// Copies each `(home, cache)` payload back home, then clears the
    /// markers. No marker reads ⊥ before its payload is home.
    pub fn release(
        &self,
        heap: &Heap,
        pid: ProcessId,
        elements: &[VertexId],
        writeback: &[(CellRef, CellRef)],
    ) -> Result<(), OwnershipError> {
        for &v in elements {
            if self.holder(heap, v) != Some(pid) {
                return Err(OwnershipError::NotHeld { pid, element: v, holder: self.holder(heap, v) });
            }
        }
        for &(home, cache) in writeback {
            heap.store(home, heap.load(cache));
        }
        for &v in elements {
            self.unmark(heap, pid, v)?;
        }
        Ok(())
    }

    /// Inside a transaction: aborts with a memory conflict unless `v` is
    /// unclaimed or claimed by `pid`.
    pub fn check_access(&self, ctx: &mut TxnCtx<'_>, pid: ProcessId, v: VertexId) -> TxResult<()> {
        let m = ctx.read(self.marker(v))?;
        if m == UNOWNED || m == pid as Word {
            Ok(())
        } else {
            Err(ctx.abort(AbortReason::MemoryConflict))
        }
    }

    /// Total markers currently held.
    pub fn held_count(&self) -> usize {
        self.holders.iter().filter(|h| h.load(SeqCst) > 0).count()
    }
}

/// Uniform delay in `[0, 2^k · base]`, capped.
pub fn ownership_backoff(failures: u32, base: Duration, cap: Duration, rng: &mut impl Rng) -> Duration {
    let window = base.saturating_mul(1u32 << failures.min(20)).min(cap);
    window.mul_f64(rng.gen_range(0.0..=1.0))
}
