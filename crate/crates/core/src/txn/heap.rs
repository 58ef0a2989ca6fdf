use std::hint;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering::SeqCst};

use serde::Serialize;

/// Machine word stored in a cell. Reals are stored as `f64::to_bits`.
pub type Word = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellRef(pub usize);

/// Contiguous run of cells handed out by [`HeapBuilder::alloc`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    base: usize,
    len: usize,
}

impl Region {
    #[inline]
    pub fn at(&self, i: usize) -> CellRef {
        debug_assert!(i < self.len, "index {i} outside region of {}", self.len);
        CellRef(self.base + i)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cells(&self) -> impl Iterator<Item = CellRef> {
        (self.base..self.base + self.len).map(CellRef)
    }
}

// Lock word states. Anything below TXN_ID_LIMIT is the id of a live
// speculative transaction holding the cell for writing.
pub(crate) const FREE: u64 = 0;
pub(crate) const COMMIT_BIT: u64 = 1 << 63;
pub(crate) const ATOMIC_HOLD: u64 = 1 << 62;
pub(crate) const SERIAL_HOLD: u64 = 1 << 61;
pub(crate) const TXN_ID_LIMIT: u64 = 1 << 60;

#[inline]
pub(crate) fn is_txn_holder(lock: u64) -> bool {
    lock != FREE && lock < TXN_ID_LIMIT
}

/// A versioned mutable word with a lock word naming its current holder.
#[derive(Debug, Default)]
pub struct Cell {
    pub(crate) value: AtomicU64,
    pub(crate) version: AtomicU64,
    pub(crate) lock: AtomicU64,
}

impl Cell {
    fn new(v: Word) -> Cell {
        Cell { value: AtomicU64::new(v), version: AtomicU64::new(0), lock: AtomicU64::new(FREE) }
    }
}

/// Holder of a cell's lock word, as observed at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LockState {
    Free,
    Txn(u64),
    Committing(u64),
    Atomic,
    Serial,
}

#[derive(Debug, Default)]
pub struct HeapBuilder {
    init: Vec<Word>,
}

impl HeapBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&mut self, len: usize, init: Word) -> Region {
        let base = self.init.len();
        self.init.resize(base + len, init);
        Region { base, len }
    }

    pub fn alloc_with(&mut self, values: impl IntoIterator<Item = Word>) -> Region {
        let base = self.init.len();
        self.init.extend(values);
        Region { base, len: self.init.len() - base }
    }

    pub fn build(self) -> Heap {
        Heap::from_values(self.init)
    }
}

/// Shared transactional memory: the cells, the global version clock and the
/// single system-wide fallback (serialization) lock.
#[derive(Debug)]
pub struct Heap {
    pub(crate) cells: Box<[Cell]>,
    pub(crate) clock: AtomicU64,
    pub(crate) serial_owner: AtomicU64,
    pub(crate) active: AtomicUsize,
    pub(crate) next_id: AtomicU64,
}

impl Heap {
    pub fn new(len: usize) -> Heap {
        Heap::from_values(vec![0; len])
    }

    pub fn from_values(values: Vec<Word>) -> Heap {
        Heap {
            cells: values.into_iter().map(Cell::new).collect(),
            clock: AtomicU64::new(0),
            serial_owner: AtomicU64::new(0),
            active: AtomicUsize::new(0),
            next_id: AtomicU64::new(1),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline]
    pub(crate) fn cell(&self, c: CellRef) -> &Cell {
        &self.cells[c.0]
    }

    pub(crate) fn fresh_id(&self) -> u64 {
        let id = self.next_id.fetch_add(1, SeqCst);
        assert!(id < TXN_ID_LIMIT, "transaction id space exhausted");
        id
    }

    /// Committed value of `c`, read outside any transaction.
    #[inline]
    pub fn load(&self, c: CellRef) -> Word {
        self.cell(c).value.load(SeqCst)
    }

    pub fn load_f64(&self, c: CellRef) -> f64 {
        f64::from_bits(self.load(c))
    }

    pub fn version(&self, c: CellRef) -> u64 {
        self.cell(c).version.load(SeqCst)
    }

    pub fn lock_state(&self, c: CellRef) -> LockState {
        match self.cell(c).lock.load(SeqCst) {
            FREE => LockState::Free,
            ATOMIC_HOLD => LockState::Atomic,
            SERIAL_HOLD => LockState::Serial,
            l if l & COMMIT_BIT != 0 => LockState::Committing(l & !COMMIT_BIT),
            l => LockState::Txn(l),
        }
    }

    /// Number of speculative transactions currently live.
    pub fn live_transactions(&self) -> usize {
        self.active.load(SeqCst)
    }

    pub fn serialized_holder(&self) -> Option<u64> {
        match self.serial_owner.load(SeqCst) {
            0 => None,
            id => Some(id),
        }
    }

    pub fn values(&self) -> Vec<Word> {
        self.cells.iter().map(|c| c.value.load(SeqCst)).collect()
    }

    pub(crate) fn tick(&self) -> u64 {
        self.clock.fetch_add(1, SeqCst) + 1
    }

    /// Takes the cell for a non-transactional update. A live transaction
    /// holding the cell loses it (its commit will fail); commit, atomic and
    /// serial holds are waited out. Returns `None` instead of waiting when
    /// `blocking` is false.
    pub(crate) fn hold_nontxn(&self, c: CellRef, blocking: bool) -> Option<()> {
        let lock = &self.cell(c).lock;
        let mut spins = 0u32;
        loop {
            let l = lock.load(SeqCst);
            if (l == FREE || is_txn_holder(l)) && lock.compare_exchange(l, ATOMIC_HOLD, SeqCst, SeqCst).is_ok() {
                return Some(());
            }
            if !blocking {
                return None;
            }
            backoff_spin(&mut spins);
        }
    }

    pub(crate) fn release_nontxn(&self, c: CellRef, new_value: Option<Word>) {
        let cell = self.cell(c);
        if let Some(v) = new_value {
            cell.value.store(v, SeqCst);
            cell.version.store(self.tick(), SeqCst);
        }
        cell.lock.store(FREE, SeqCst);
    }

    /// Writes `v` outside any transaction. Conflicting live transactions abort
    /// on their next validation.
    pub fn store(&self, c: CellRef, v: Word) {
        self.hold_nontxn(c, true);
        self.release_nontxn(c, Some(v));
    }

    pub fn store_f64(&self, c: CellRef, v: f64) {
        self.store(c, v.to_bits());
    }

    /// Replaces every cell value from `values`; intended for quiescent resets
    /// between rounds.
    pub fn store_all(&self, region: Region, values: impl IntoIterator<Item = Word>) {
        for (c, v) in region.cells().zip(values) {
            self.store(c, v);
        }
    }
}

impl Clone for Heap {
    /// Copies the committed state. Only meaningful while no transaction is
    /// live, which is how the step scheduler uses it.
    fn clone(&self) -> Heap {
        Heap {
            cells: self
                .cells
                .iter()
                .map(|c| Cell {
                    value: AtomicU64::new(c.value.load(SeqCst)),
                    version: AtomicU64::new(c.version.load(SeqCst)),
                    lock: AtomicU64::new(c.lock.load(SeqCst)),
                })
                .collect(),
            clock: AtomicU64::new(self.clock.load(SeqCst)),
            serial_owner: AtomicU64::new(self.serial_owner.load(SeqCst)),
            active: AtomicUsize::new(self.active.load(SeqCst)),
            next_id: AtomicU64::new(self.next_id.load(SeqCst)),
        }
    }
}

#[inline]
pub(crate) fn backoff_spin(spins: &mut u32) {
    if *spins < 64 {
        hint::spin_loop();
    } else {
        std::thread::yield_now();
    }
    *spins = spins.saturating_add(1);
}
