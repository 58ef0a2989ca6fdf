use parking_lot::Mutex;

use super::{check_vertex, runtime, AlgoError};
use crate::graph::{Graph, VertexId};
use crate::runtime::{MessageClass, OpOutput, Operator, RunReport, RuntimeConfig, SpawnCtx};
use crate::txn::{AccOp, AtomicCtx, Heap, HeapBuilder, Region, TxResult, TxnCtx};

pub const UNVISITED: u64 = u64::MAX;

#[derive(Debug, Clone, Copy)]
pub struct BfsOptions {
    /// Drop a visit before starting a transaction when the vertex already
    /// has a distance no larger than the offered one.
    pub visited_check: bool,
}

impl Default for BfsOptions {
    fn default() -> Self {
        BfsOptions { visited_check: true }
    }
}

#[derive(Debug, Clone)]
pub struct BfsResult {
    pub distances: Vec<u64>,
    /// Number of non-empty levels, the source's included.
    pub levels: usize,
    pub report: RunReport,
}

impl BfsResult {
    pub fn reached(&self) -> usize {
        self.distances.iter().filter(|&&d| d != UNVISITED).count()
    }
}

struct Visit<'a> {
    dist: Region,
    next: &'a Mutex<Vec<VertexId>>,
    visited_check: bool,
}

impl Operator for Visit<'_> {
    fn class(&self) -> MessageClass {
        MessageClass::FF_MF
    }

    fn apply(&self, ctx: &mut TxnCtx<'_>, v: VertexId, new_dist: u64) -> TxResult<OpOutput> {
        let cell = self.dist.at(v);
        if ctx.read(cell)? > new_dist {
            ctx.write(cell, new_dist)?;
            Ok(OpOutput::OK)
        } else {
            Ok(OpOutput::FAILED)
        }
    }

    fn supports_atomics(&self) -> bool {
        true
    }

    fn apply_atomic(&self, ctx: &mut AtomicCtx<'_>, v: VertexId, new_dist: u64) -> OpOutput {
        if ctx.fao(self.dist.at(v), new_dist, AccOp::Min) > new_dist {
            OpOutput::OK
        } else {
            OpOutput::FAILED
        }
    }

    fn skip(&self, heap: &Heap, v: VertexId, new_dist: u64) -> bool {
        self.visited_check && heap.load(self.dist.at(v)) <= new_dist
    }

    fn committed(&self, _ctx: &mut SpawnCtx<'_>, v: VertexId, _new_dist: u64, out: &OpOutput) {
        if !out.failed {
            self.next.lock().push(v);
        }
    }
}

pub fn bfs(graph: &Graph, source: VertexId, cfg: &RuntimeConfig) -> Result<BfsResult, AlgoError> {
    bfs_with(graph, source, cfg, BfsOptions::default())
}

/// Level-synchronous BFS: every round visits the neighbors of the vertices
/// whose distance was set in the previous round.
pub fn bfs_with(graph: &Graph, source: VertexId, cfg: &RuntimeConfig, opts: BfsOptions) -> Result<BfsResult, AlgoError> {
    check_vertex(graph, source, "source")?;
    let n = graph.num_vertices();
    let mut b = HeapBuilder::new();
    let dist = b.alloc(n, UNVISITED);
    let next = Mutex::new(Vec::new());

    let mut rt = runtime(cfg, graph, b.build())?;
    let op = rt.register_operator(Box::new(Visit { dist, next: &next, visited_check: opts.visited_check }))?;

    super::seed(&rt, op, source, 0)?;
    let mut report = rt.run_to_quiescence()?;
    let mut level = 0u64;
    loop {
        let mut frontier = std::mem::take(&mut *next.lock());
        if frontier.is_empty() {
            break;
        }
        level += 1;
        frontier.sort_unstable();
        for u in frontier {
            let p = rt.partition().owner_unchecked(u);
            for &w in graph.neighbors(u) {
                rt.send(p, op, w, level)?;
            }
        }
        report.absorb(&rt.run_to_quiescence()?);
    }
    let distances: Vec<u64> = dist.cells().map(|c| rt.heap().load(c)).collect();
    let levels = distances.iter().filter(|&&d| d != UNVISITED).max().map_or(0, |&d| d as usize + 1);
    Ok(BfsResult { distances, levels, report })
}
