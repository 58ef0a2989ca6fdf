use std::ops::Range;

use super::{GraphError, VertexId};

pub type ProcessId = usize;

/// Contiguous one-dimensional block partitioning of `n` vertices over
/// `procs` processes. The first `n % procs` blocks hold one extra vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Partition {
    n: usize,
    procs: usize,
    small: usize,
    big_blocks: usize,
}

impl Partition {
    pub fn new(n: usize, procs: usize) -> Partition {
        assert!(procs >= 1, "need at least one process");
        Partition { n, procs, small: n / procs, big_blocks: n % procs }
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn num_procs(&self) -> usize {
        self.procs
    }

    /// Owner of `v`, or an error when `v` is outside the partitioned range.
    pub fn owner(&self, v: VertexId) -> Result<ProcessId, GraphError> {
        if v >= self.n {
            return Err(GraphError::OutOfRange { vertex: v, n: self.n });
        }
        Ok(self.owner_unchecked(v))
    }

    #[inline]
    pub fn owner_unchecked(&self, v: VertexId) -> ProcessId {
        let big = self.small + 1;
        let split = self.big_blocks * big;
        if v < split {
            v / big
        } else {
            self.big_blocks + (v - split) / self.small
        }
    }

    pub fn range(&self, p: ProcessId) -> Range<VertexId> {
        let start = p * self.small + p.min(self.big_blocks);
        let len = self.small + usize::from(p < self.big_blocks);
        start..start + len
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        (0..self.procs).map(|p| self.range(p).len()).collect()
    }
}
