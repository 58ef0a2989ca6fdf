//! Single-word atomics (CAS, accumulate, fetch-and-op) executed outside any
//! transaction. They take the cell's lock word for the duration of the update,
//! so a live transaction that holds or has read the cell aborts rather than
//! the atomic.

use std::str::FromStr;

use super::heap::{CellRef, Heap, Word};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccOp {
    Sum,
    Min,
    Max,
    /// Sum of `f64` values stored as bits.
    FloatSum,
}

impl AccOp {
    pub fn apply(self, current: Word, arg: Word) -> Word {
        match self {
            AccOp::Sum => current.wrapping_add(arg),
            AccOp::Min => current.min(arg),
            AccOp::Max => current.max(arg),
            AccOp::FloatSum => (f64::from_bits(current) + f64::from_bits(arg)).to_bits(),
        }
    }
}

impl FromStr for AccOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(AccOp::Sum),
            "min" => Ok(AccOp::Min),
            "max" => Ok(AccOp::Max),
            "fsum" => Ok(AccOp::FloatSum),
            other => Err(format!("unknown accumulate op '{other}'")),
        }
    }
}

impl Heap {
    /// Writes `new` iff the cell holds `compare`. Returns whether it did.
    pub fn atomic_cas(&self, c: CellRef, compare: Word, new: Word) -> bool {
        self.try_atomic_cas(c, compare, new, true).expect("blocking")
    }

    pub fn atomic_acc(&self, c: CellRef, arg: Word, op: AccOp) {
        self.atomic_fao(c, arg, op);
    }

    /// Applies `op` and returns the previous value.
    pub fn atomic_fao(&self, c: CellRef, arg: Word, op: AccOp) -> Word {
        self.try_atomic_fao(c, arg, op, true).expect("blocking")
    }

    pub(crate) fn try_atomic_cas(&self, c: CellRef, compare: Word, new: Word, blocking: bool) -> Option<bool> {
        self.hold_nontxn(c, blocking)?;
        let current = self.load(c);
        let hit = current == compare;
        self.release_nontxn(c, hit.then_some(new));
        Some(hit)
    }

    pub(crate) fn try_atomic_fao(&self, c: CellRef, arg: Word, op: AccOp, blocking: bool) -> Option<Word> {
        self.hold_nontxn(c, blocking)?;
        let prev = self.load(c);
        let next = op.apply(prev, arg);
        self.release_nontxn(c, (next != prev).then_some(next));
        Some(prev)
    }
}
