use std::collections::BTreeMap;
use std::sync::atomic::Ordering::SeqCst;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::heap::{backoff_spin, is_txn_holder, CellRef, Heap, Word, COMMIT_BIT, FREE, SERIAL_HOLD};
use super::{AbortReason, TxResult, TxnSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxnMode {
    Speculative,
    /// Running under the global fallback lock; never aborts on conflicts.
    Serialized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxnStatus {
    Live,
    Committed,
    Aborted(AbortReason),
}

/// Per-attempt transaction state: read set with observed versions, buffered
/// write set, and the footprint counted against the capacity.
#[derive(Debug, Clone)]
pub struct Txn {
    id: u64,
    mode: TxnMode,
    status: TxnStatus,
    read_version: u64,
    capacity: usize,
    read_set: BTreeMap<CellRef, u64>,
    write_set: BTreeMap<CellRef, Word>,
    held: Vec<CellRef>,
    footprint: usize,
    doomed_other: bool,
    rng_seed: u64,
    rng: Option<ChaCha8Rng>,
}

impl Txn {
    fn new(id: u64, mode: TxnMode, read_version: u64, capacity: usize) -> Txn {
        Txn {
            id,
            mode,
            status: TxnStatus::Live,
            read_version,
            capacity,
            read_set: BTreeMap::new(),
            write_set: BTreeMap::new(),
            held: Vec::new(),
            footprint: 0,
            doomed_other: false,
            rng_seed: id,
            rng: None,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn mode(&self) -> TxnMode {
        self.mode
    }

    pub fn status(&self) -> TxnStatus {
        self.status
    }

    pub fn is_live(&self) -> bool {
        self.status == TxnStatus::Live
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Global clock value sampled at begin.
    pub fn read_version(&self) -> u64 {
        self.read_version
    }

    /// Distinct cells touched so far, `|read_set ∪ write_set|`.
    pub fn footprint(&self) -> usize {
        self.footprint
    }

    pub fn read_set(&self) -> impl Iterator<Item = (CellRef, u64)> + '_ {
        self.read_set.iter().map(|(&c, &v)| (c, v))
    }

    pub fn write_set(&self) -> impl Iterator<Item = (CellRef, Word)> + '_ {
        self.write_set.iter().map(|(&c, &v)| (c, v))
    }

    /// Makes the commit of this attempt fail with [`AbortReason::Other`].
    pub fn doom_other(&mut self) {
        self.doomed_other = true;
    }

    pub fn seed_rng(&mut self, seed: u64) {
        self.rng_seed = seed;
        self.rng = None;
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        let seed = self.rng_seed;
        self.rng.get_or_insert_with(|| ChaCha8Rng::seed_from_u64(seed))
    }

    fn knows(&self, c: CellRef) -> bool {
        self.read_set.contains_key(&c) || self.write_set.contains_key(&c)
    }

    fn check_room(&self, c: CellRef) -> Result<bool, AbortReason> {
        if self.knows(c) {
            return Ok(false);
        }
        if self.mode == TxnMode::Speculative && self.footprint >= self.capacity {
            return Err(AbortReason::BufferOverflow);
        }
        Ok(true)
    }
}

impl Heap {
    /// Starts a speculative attempt, or returns `None` while the fallback lock
    /// is held.
    pub fn try_begin(&self, capacity: usize) -> Option<Txn> {
        self.active.fetch_add(1, SeqCst);
        if self.serial_owner.load(SeqCst) != 0 {
            self.active.fetch_sub(1, SeqCst);
            return None;
        }
        Some(Txn::new(self.fresh_id(), TxnMode::Speculative, self.clock.load(SeqCst), capacity))
    }

    /// Claims the global fallback lock. Live speculative transactions abort on
    /// their next access; new ones wait. Returns the ticket id on success.
    pub fn try_acquire_serial(&self) -> Option<u64> {
        let id = self.fresh_id();
        self.serial_owner.compare_exchange(0, id, SeqCst, SeqCst).ok().map(|_| id)
    }

    /// True once no speculative transaction is live.
    pub fn serial_drained(&self) -> bool {
        self.active.load(SeqCst) == 0
    }

    /// Starts the serialized execution owned by `ticket`.
    pub fn begin_serial(&self, ticket: u64) -> Txn {
        assert_eq!(self.serial_owner.load(SeqCst), ticket, "fallback lock not held by ticket");
        Txn::new(ticket, TxnMode::Serialized, self.clock.load(SeqCst), usize::MAX)
    }

    fn serial_ticket_lost(&self, tx: &Txn) -> bool {
        tx.mode == TxnMode::Speculative && self.serial_owner.load(SeqCst) != 0
    }

    fn fail(&self, tx: &mut Txn, reason: AbortReason) -> AbortReason {
        self.txn_abort(tx, reason);
        reason
    }

    fn ensure_live(&self, tx: &Txn) -> Result<(), AbortReason> {
        match tx.status {
            TxnStatus::Live => Ok(()),
            TxnStatus::Aborted(r) => Err(r),
            TxnStatus::Committed => panic!("transaction {} used after commit", tx.id),
        }
    }

    fn serial_hold(&self, tx: &mut Txn, c: CellRef) {
        if tx.held.contains(&c) {
            return;
        }
        let lock = &self.cell(c).lock;
        let mut spins = 0;
        while lock.compare_exchange(FREE, SERIAL_HOLD, SeqCst, SeqCst).is_err() {
            backoff_spin(&mut spins);
        }
        tx.held.push(c);
    }

    pub fn txn_read(&self, tx: &mut Txn, c: CellRef) -> Result<Word, AbortReason> {
        self.ensure_live(tx)?;
        if let Some(&v) = tx.write_set.get(&c) {
            return Ok(v);
        }
        if self.serial_ticket_lost(tx) {
            return Err(self.fail(tx, AbortReason::MemoryConflict));
        }
        let is_new = match tx.check_room(c) {
            Ok(n) => n,
            Err(r) => return Err(self.fail(tx, r)),
        };

        let cell = self.cell(c);
        if tx.mode == TxnMode::Serialized {
            self.serial_hold(tx, c);
            let v = cell.value.load(SeqCst);
            tx.read_set.insert(c, cell.version.load(SeqCst));
            tx.footprint += usize::from(is_new);
            return Ok(v);
        }

        let mut spins = 0;
        let (value, version) = loop {
            let l1 = cell.lock.load(SeqCst);
            if is_txn_holder(l1) && l1 != tx.id {
                return Err(self.fail(tx, AbortReason::MemoryConflict));
            }
            if l1 != FREE {
                // commit, atomic or serial hold: short-lived
                backoff_spin(&mut spins);
                continue;
            }
            let v1 = cell.version.load(SeqCst);
            let val = cell.value.load(SeqCst);
            let l2 = cell.lock.load(SeqCst);
            let v2 = cell.version.load(SeqCst);
            if l1 == l2 && v1 == v2 {
                break (val, v1);
            }
        };
        if version > tx.read_version {
            return Err(self.fail(tx, AbortReason::MemoryConflict));
        }
        if let Some(&seen) = tx.read_set.get(&c) {
            if seen != version {
                return Err(self.fail(tx, AbortReason::MemoryConflict));
            }
        }
        tx.read_set.insert(c, version);
        tx.footprint += usize::from(is_new);
        Ok(value)
    }

    pub fn txn_write(&self, tx: &mut Txn, c: CellRef, value: Word) -> Result<(), AbortReason> {
        self.ensure_live(tx)?;
        if let Some(slot) = tx.write_set.get_mut(&c) {
            *slot = value;
            return Ok(());
        }
        if self.serial_ticket_lost(tx) {
            return Err(self.fail(tx, AbortReason::MemoryConflict));
        }
        let is_new = match tx.check_room(c) {
            Ok(n) => n,
            Err(r) => return Err(self.fail(tx, r)),
        };

        if tx.mode == TxnMode::Serialized {
            self.serial_hold(tx, c);
            tx.write_set.insert(c, value);
            tx.footprint += usize::from(is_new);
            return Ok(());
        }

        let cell = self.cell(c);
        let mut spins = 0;
        loop {
            let l = cell.lock.load(SeqCst);
            if l == FREE {
                if cell.lock.compare_exchange(FREE, tx.id, SeqCst, SeqCst).is_ok() {
                    break;
                }
                continue;
            }
            if is_txn_holder(l) {
                return Err(self.fail(tx, AbortReason::MemoryConflict));
            }
            backoff_spin(&mut spins);
        }
        tx.write_set.insert(c, value);
        tx.footprint += usize::from(is_new);
        if let Some(&seen) = tx.read_set.get(&c) {
            if cell.version.load(SeqCst) != seen {
                return Err(self.fail(tx, AbortReason::MemoryConflict));
            }
        }
        Ok(())
    }

    /// Validates and publishes the write set. On failure the attempt is
    /// rolled back and the reason returned.
    pub fn txn_commit(&self, tx: &mut Txn) -> Result<(), AbortReason> {
        self.ensure_live(tx)?;
        if tx.mode == TxnMode::Serialized {
            let wv = self.tick();
            for (&c, &v) in &tx.write_set {
                let cell = self.cell(c);
                cell.value.store(v, SeqCst);
                cell.version.store(wv, SeqCst);
            }
            for &c in &tx.held {
                self.cell(c).lock.store(FREE, SeqCst);
            }
            tx.held.clear();
            tx.status = TxnStatus::Committed;
            self.serial_owner.store(0, SeqCst);
            return Ok(());
        }

        if tx.doomed_other {
            return Err(self.fail(tx, AbortReason::Other));
        }
        for &c in tx.write_set.keys() {
            let lock = &self.cell(c).lock;
            if lock.compare_exchange(tx.id, tx.id | COMMIT_BIT, SeqCst, SeqCst).is_err() {
                return Err(self.fail(tx, AbortReason::MemoryConflict));
            }
        }
        for (&c, &seen) in &tx.read_set {
            let cell = self.cell(c);
            if !tx.write_set.contains_key(&c) && cell.lock.load(SeqCst) != FREE {
                return Err(self.fail(tx, AbortReason::MemoryConflict));
            }
            if cell.version.load(SeqCst) != seen {
                return Err(self.fail(tx, AbortReason::MemoryConflict));
            }
        }
        if !tx.write_set.is_empty() {
            let wv = self.tick();
            for (&c, &v) in &tx.write_set {
                let cell = self.cell(c);
                cell.value.store(v, SeqCst);
                cell.version.store(wv, SeqCst);
                cell.lock.store(FREE, SeqCst);
            }
        }
        tx.status = TxnStatus::Committed;
        self.active.fetch_sub(1, SeqCst);
        Ok(())
    }

    /// Rolls back a live attempt: releases every lock it holds and discards
    /// the write set. No-op on attempts that already finished.
    pub fn txn_abort(&self, tx: &mut Txn, reason: AbortReason) {
        if tx.status != TxnStatus::Live {
            return;
        }
        match tx.mode {
            TxnMode::Speculative => {
                for &c in tx.write_set.keys() {
                    let lock = &self.cell(c).lock;
                    // CAS because an atomic may have taken the cell from us
                    let _ = lock.compare_exchange(tx.id, FREE, SeqCst, SeqCst);
                    let _ = lock.compare_exchange(tx.id | COMMIT_BIT, FREE, SeqCst, SeqCst);
                }
                self.active.fetch_sub(1, SeqCst);
            }
            TxnMode::Serialized => {
                for &c in &tx.held {
                    self.cell(c).lock.store(FREE, SeqCst);
                }
                tx.held.clear();
                self.serial_owner.store(0, SeqCst);
            }
        }
        tx.status = TxnStatus::Aborted(reason);
    }
}

/// Handle given to transaction bodies. All shared-state access inside a body
/// goes through it.
pub struct TxnCtx<'a> {
    heap: &'a Heap,
    tx: &'a mut Txn,
}

impl<'a> TxnCtx<'a> {
    pub fn new(heap: &'a Heap, tx: &'a mut Txn) -> Self {
        TxnCtx { heap, tx }
    }

    pub fn read(&mut self, c: CellRef) -> TxResult<Word> {
        self.heap.txn_read(self.tx, c).map_err(TxnSignal::Abort)
    }

    pub fn write(&mut self, c: CellRef, v: Word) -> TxResult<()> {
        self.heap.txn_write(self.tx, c, v).map_err(TxnSignal::Abort)
    }

    pub fn read_f64(&mut self, c: CellRef) -> TxResult<f64> {
        self.read(c).map(f64::from_bits)
    }

    pub fn write_f64(&mut self, c: CellRef, v: f64) -> TxResult<()> {
        self.write(c, v.to_bits())
    }

    pub fn heap(&self) -> &Heap {
        self.heap
    }

    pub fn txn(&self) -> &Txn {
        self.tx
    }

    pub fn mode(&self) -> TxnMode {
        self.tx.mode
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.tx.rng()
    }

    /// Aborts the attempt explicitly, e.g. on touching an element another
    /// process has claimed.
    pub fn abort(&mut self, reason: AbortReason) -> TxnSignal {
        self.heap.txn_abort(self.tx, reason);
        TxnSignal::Abort(reason)
    }

    /// Builds a non-transactional fault; the executor rolls back and
    /// propagates it.
    pub fn fault(&self, msg: impl Into<String>) -> TxnSignal {
        TxnSignal::Fault(msg.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::txn::LockState;

    fn heap(vals: &[Word]) -> Heap {
        Heap::from_values(vals.to_vec())
    }

    #[test]
    fn read_then_commit_keeps_version() {
        let h = heap(&[3]);
        let v0 = h.version(CellRef(0));
        let mut tx = h.try_begin(8).unwrap();
        assert_eq!(h.txn_read(&mut tx, CellRef(0)).unwrap(), 3);
        h.txn_commit(&mut tx).unwrap();
        assert_eq!(h.version(CellRef(0)), v0);
        assert_eq!(h.live_transactions(), 0);
    }

    #[test]
    fn concurrent_committed_write_conflicts_on_validation() {
        let h = heap(&[0]);
        let mut reader = h.try_begin(8).unwrap();
        h.txn_read(&mut reader, CellRef(0)).unwrap();
        let mut writer = h.try_begin(8).unwrap();
        h.txn_write(&mut writer, CellRef(0), 1).unwrap();
        h.txn_commit(&mut writer).unwrap();
        assert_eq!(h.txn_commit(&mut reader), Err(AbortReason::MemoryConflict));
    }

    #[test]
    fn capacity_overflow_on_fifth_cell() {
        let h = Heap::new(5);
        let mut tx = h.try_begin(4).unwrap();
        for i in 0..4 {
            h.txn_read(&mut tx, CellRef(i)).unwrap();
        }
        // re-reading a known cell does not count
        h.txn_read(&mut tx, CellRef(0)).unwrap();
        assert_eq!(h.txn_read(&mut tx, CellRef(4)), Err(AbortReason::BufferOverflow));
        assert_eq!(tx.status(), TxnStatus::Aborted(AbortReason::BufferOverflow));
    }

    #[test]
    fn write_then_abort_leaves_cell() {
        let h = heap(&[10]);
        let v0 = h.version(CellRef(0));
        let mut tx = h.try_begin(8).unwrap();
        h.txn_write(&mut tx, CellRef(0), 99).unwrap();
        assert_eq!(h.load(CellRef(0)), 10);
        assert_eq!(h.lock_state(CellRef(0)), LockState::Txn(tx.id()));
        h.txn_abort(&mut tx, AbortReason::Other);
        assert_eq!(h.load(CellRef(0)), 10);
        assert_eq!(h.version(CellRef(0)), v0);
        assert_eq!(h.lock_state(CellRef(0)), LockState::Free);
    }

    #[test]
    fn write_then_commit_bumps_version() {
        let h = heap(&[10]);
        let v0 = h.version(CellRef(0));
        let mut tx = h.try_begin(8).unwrap();
        h.txn_write(&mut tx, CellRef(0), 11).unwrap();
        h.txn_commit(&mut tx).unwrap();
        assert_eq!(h.load(CellRef(0)), 11);
        assert!(h.version(CellRef(0)) >= v0 + 1);
    }

    #[test]
    fn two_writers_one_conflicts() {
        let h = heap(&[0]);
        let mut a = h.try_begin(8).unwrap();
        let mut b = h.try_begin(8).unwrap();
        h.txn_write(&mut a, CellRef(0), 1).unwrap();
        assert_eq!(h.txn_write(&mut b, CellRef(0), 2), Err(AbortReason::MemoryConflict));
        h.txn_commit(&mut a).unwrap();
        assert_eq!(h.load(CellRef(0)), 1);
    }

    #[test]
    fn atomic_steals_from_live_writer() {
        let h = heap(&[5]);
        let mut tx = h.try_begin(8).unwrap();
        h.txn_write(&mut tx, CellRef(0), 6).unwrap();
        assert!(h.atomic_cas(CellRef(0), 5, 7));
        assert_eq!(h.txn_commit(&mut tx), Err(AbortReason::MemoryConflict));
        assert_eq!(h.load(CellRef(0)), 7);
        assert_eq!(h.lock_state(CellRef(0)), LockState::Free);
    }

    #[test]
    fn serial_lock_aborts_live_speculation() {
        let h = heap(&[0, 0]);
        let mut tx = h.try_begin(8).unwrap();
        h.txn_read(&mut tx, CellRef(0)).unwrap();
        let ticket = h.try_acquire_serial().unwrap();
        assert!(!h.serial_drained());
        assert!(h.try_begin(8).is_none());
        assert_eq!(h.txn_read(&mut tx, CellRef(1)), Err(AbortReason::MemoryConflict));
        assert!(h.serial_drained());
        let mut s = h.begin_serial(ticket);
        let v = h.txn_read(&mut s, CellRef(0)).unwrap();
        h.txn_write(&mut s, CellRef(0), v + 1).unwrap();
        h.txn_commit(&mut s).unwrap();
        assert_eq!(h.load(CellRef(0)), 1);
        assert!(h.serialized_holder().is_none());
        assert!(h.try_begin(8).is_some());
    }

    #[test]
    fn read_sees_own_write() {
        let h = heap(&[1]);
        let mut tx = h.try_begin(8).unwrap();
        h.txn_write(&mut tx, CellRef(0), 42).unwrap();
        assert_eq!(h.txn_read(&mut tx, CellRef(0)).unwrap(), 42);
        assert_eq!(tx.footprint(), 1);
    }
}
