use std::cmp::Ordering;

use parking_lot::Mutex;

use super::{runtime, AlgoError};
use crate::graph::{Graph, VertexId};
use crate::runtime::{FailureHandler, MessageClass, OpOutput, Operator, OperatorId, Reply, RunReport, RuntimeConfig, SpawnCtx};
use crate::txn::{HeapBuilder, Region, TxResult, TxnCtx, Word};

const END: Word = u64::MAX;
/// Reply of a supervertex with no edge leaving it.
const DONE: u64 = u64::MAX;

/// What the spawner does when its supervertex was absorbed before the
/// operator ran.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RetryMode {
    /// Respawn at the absorbing supervertex within the same round.
    #[default]
    Immediate,
    /// Leave it to the next round.
    NextRound,
}

#[derive(Debug, Clone)]
pub struct MstResult {
    /// `(u, v, w)` with `u < v`, sorted.
    pub edges: Vec<(VertexId, VertexId, f64)>,
    pub total_weight: f64,
    pub components: usize,
    pub rounds: usize,
    pub report: RunReport,
}

/// Component state. Each supervertex is the head of a linked member list;
/// `rep` maps every vertex to its current head.
#[derive(Clone, Copy)]
struct Cells {
    rep: Region,
    next: Region,
    tail: Region,
    size: Region,
}

struct Merge<'g> {
    graph: &'g Graph,
    weights: &'g [f64],
    cells: Cells,
}

fn edge_key(w: f64, x: VertexId, y: VertexId) -> (f64, VertexId, VertexId) {
    (w, x.min(y), x.max(y))
}

fn key_cmp(a: &(f64, VertexId, VertexId), b: &(f64, VertexId, VertexId)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

impl Merge<'_> {
    fn members(&self, ctx: &mut TxnCtx<'_>, head: VertexId) -> TxResult<Vec<VertexId>> {
        let mut out = vec![head];
        let mut x = ctx.read(self.cells.next.at(head))?;
        while x != END {
            out.push(x as VertexId);
            x = ctx.read(self.cells.next.at(x as usize))?;
        }
        Ok(out)
    }
}

impl Operator for Merge<'_> {
    fn class(&self) -> MessageClass {
        MessageClass::FR_MF
    }

    /// Contracts the lightest edge leaving supervertex `r`. Fails when `r`
    /// has itself been absorbed; replies `arc << 32 | survivor` otherwise.
    fn apply(&self, ctx: &mut TxnCtx<'_>, r: VertexId, _: u64) -> TxResult<OpOutput> {
        let c = self.cells;
        if ctx.read(c.rep.at(r))? != r as Word {
            return Ok(OpOutput::FAILED);
        }
        let offsets = self.graph.row_offsets();
        let cols = self.graph.col_indices();
        let mut best: Option<((f64, VertexId, VertexId), usize)> = None;
        for x in self.members(ctx, r)? {
            for arc in offsets[x]..offsets[x + 1] {
                let y = cols[arc];
                if ctx.read(c.rep.at(y))? == r as Word {
                    continue;
                }
                let key = edge_key(self.weights[arc], x, y);
                if best.as_ref().is_none_or(|(k, _)| key_cmp(&key, k).is_lt()) {
                    best = Some((key, arc));
                }
            }
        }
        let Some((_, arc)) = best else { return Ok(OpOutput::reply(DONE)) };
        let s = ctx.read(c.rep.at(cols[arc]))? as VertexId;

        let (size_r, size_s) = (ctx.read(c.size.at(r))?, ctx.read(c.size.at(s))?);
        let (keep, gone) = if size_r > size_s || (size_r == size_s && r < s) { (r, s) } else { (s, r) };
        for x in self.members(ctx, gone)? {
            ctx.write(c.rep.at(x), keep as Word)?;
        }
        let keep_tail = ctx.read(c.tail.at(keep))? as usize;
        ctx.write(c.next.at(keep_tail), gone as Word)?;
        let gone_tail = ctx.read(c.tail.at(gone))?;
        ctx.write(c.tail.at(keep), gone_tail)?;
        ctx.write(c.size.at(keep), size_r + size_s)?;
        Ok(OpOutput::reply(((arc as u64) << 32) | keep as u64))
    }
}

struct Spawner<'a> {
    merge: OperatorId,
    rep: Region,
    mode: RetryMode,
    chosen: &'a Mutex<Vec<usize>>,
}

impl FailureHandler for Spawner<'_> {
    fn handle(&self, ctx: &mut SpawnCtx<'_>, reply: &Reply) {
        if reply.output.failed {
            match self.mode {
                RetryMode::Immediate => {
                    let head = ctx.heap().load(self.rep.at(reply.element)) as VertexId;
                    ctx.spawn(self.merge, head, 0);
                }
                RetryMode::NextRound => {}
            }
        } else if reply.output.reply != DONE {
            self.chosen.lock().push((reply.output.reply >> 32) as usize);
        }
    }
}

pub fn boruvka_mst(graph: &Graph, cfg: &RuntimeConfig) -> Result<MstResult, AlgoError> {
    boruvka_mst_with(graph, cfg, RetryMode::default())
}

/// Minimum spanning forest of an undirected weighted graph. Each round sends
/// one merge operator to every live supervertex; rounds repeat until none
/// merges.
pub fn boruvka_mst_with(graph: &Graph, cfg: &RuntimeConfig, mode: RetryMode) -> Result<MstResult, AlgoError> {
    if graph.is_directed() {
        return Err(AlgoError::Input("spanning trees need an undirected graph".into()));
    }
    let weights = graph.weights().ok_or_else(|| AlgoError::Input("graph has no edge weights".into()))?;
    let n = graph.num_vertices();
    if n >= 1 << 32 || graph.num_arcs() >= 1 << 32 {
        return Err(AlgoError::Input("graph too large for reply encoding".into()));
    }
    let mut b = HeapBuilder::new();
    let cells = Cells {
        rep: b.alloc_with((0..n as u64).collect::<Vec<_>>()),
        next: b.alloc(n, END),
        tail: b.alloc_with((0..n as u64).collect::<Vec<_>>()),
        size: b.alloc(n, 1),
    };
    let chosen = Mutex::new(Vec::new());
    let mut rt = runtime(cfg, graph, b.build())?;
    let merge = rt.register_operator(Box::new(Merge { graph, weights, cells }))?;
    rt.register_handler(
        merge,
        Box::new(Spawner { merge, rep: cells.rep, mode, chosen: &chosen }),
    )?;

    let mut report = RunReport::default();
    let mut rounds = 0;
    loop {
        let before = chosen.lock().len();
        for v in 0..n {
            if rt.heap().load(cells.rep.at(v)) == v as Word {
                super::seed(&rt, merge, v, 0)?;
            }
        }
        report.absorb(&rt.run_to_quiescence()?);
        rounds += 1;
        if chosen.lock().len() == before {
            break;
        }
    }

    let offsets = graph.row_offsets();
    let cols = graph.col_indices();
    let chosen = std::mem::take(&mut *chosen.lock());
    let mut edges: Vec<(VertexId, VertexId, f64)> = chosen
        .into_iter()
        .map(|arc| {
            let u = offsets.partition_point(|&o| o <= arc) - 1;
            let v = cols[arc];
            (u.min(v), u.max(v), weights[arc])
        })
        .collect();
    edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let total_weight = edges.iter().map(|e| e.2).sum();
    Ok(MstResult { components: n - edges.len(), edges, total_weight, rounds, report })
}
