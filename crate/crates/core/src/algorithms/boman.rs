use std::sync::atomic::{AtomicU64, Ordering::SeqCst};

use rand::Rng;

use super::{runtime, AlgoError};
use crate::graph::{Graph, VertexId};
use crate::runtime::{
    FailureHandler, MessageClass, OpOutput, Operator, OperatorId, Reply, RunReport, RuntimeConfig, RuntimeError, SpawnCtx,
};
use crate::txn::{Heap, HeapBuilder, Region, TxResult, TxnCtx, Word};

pub const UNCOLORED: u64 = u64::MAX;
const NO_VERTEX: u64 = u64::MAX;

#[derive(Debug, Clone)]
pub struct ColoringResult {
    pub colors: Vec<u64>,
    pub num_colors: usize,
    pub recolors: u64,
    pub report: RunReport,
}

/// Smallest color no neighbor of `v` holds, reading `color` through `get`.
fn smallest_free(graph: &Graph, v: VertexId, mut get: impl FnMut(VertexId) -> Word) -> u64 {
    let mut used: Vec<u64> = graph.neighbors(v).iter().map(|&w| get(w)).filter(|&c| c != UNCOLORED).collect();
    used.sort_unstable();
    used.dedup();
    used.iter().enumerate().find(|&(i, &c)| c != i as u64).map_or(used.len(), |(i, _)| i) as u64
}

struct Assign<'g> {
    graph: &'g Graph,
    color: Region,
}

impl Operator for Assign<'_> {
    fn class(&self) -> MessageClass {
        MessageClass::FR_MF
    }

    /// Colors `v` with `x`. On a clash with one neighbor a fair coin picks
    /// which of the two is recolored; with several, `v` is.
    fn apply(&self, ctx: &mut TxnCtx<'_>, v: VertexId, x: u64) -> TxResult<OpOutput> {
        ctx.write(self.color.at(v), x)?;
        let mut clash = None;
        for &w in self.graph.neighbors(v) {
            if ctx.read(self.color.at(w))? == x {
                if clash.is_some() {
                    return Ok(OpOutput { reply: v as u64, failed: true });
                }
                clash = Some(w);
            }
        }
        Ok(match clash {
            Some(w) => {
                let loser = if ctx.rng().gen_bool(0.5) { w } else { v };
                OpOutput { reply: loser as u64, failed: true }
            }
            None => OpOutput::reply(NO_VERTEX),
        })
    }
}

struct Recolor<'g> {
    graph: &'g Graph,
    color: Region,
    assign: OperatorId,
    recolors: &'g AtomicU64,
    budget: u64,
}

impl FailureHandler for Recolor<'_> {
    fn handle(&self, ctx: &mut SpawnCtx<'_>, reply: &Reply) {
        if !reply.output.failed {
            return;
        }
        if self.recolors.fetch_add(1, SeqCst) >= self.budget {
            ctx.fail(RuntimeError::Fault(format!("coloring still conflicting after {} recolorings", self.budget)));
            return;
        }
        let z = reply.output.reply as VertexId;
        let heap: &Heap = ctx.heap();
        let x = smallest_free(self.graph, z, |w| heap.load(self.color.at(w)));
        ctx.spawn(self.assign, z, x);
    }
}

/// Each process greedily colors its own block looking only at local
/// neighbors, then clashes across blocks are repaired by recoloring.
pub fn boman_coloring(graph: &Graph, cfg: &RuntimeConfig) -> Result<ColoringResult, AlgoError> {
    let n = graph.num_vertices();
    let mut b = HeapBuilder::new();
    let color = b.alloc(n, UNCOLORED);
    let recolors = AtomicU64::new(0);
    let mut rt = runtime(cfg, graph, b.build())?;
    let assign = rt.register_operator(Box::new(Assign { graph, color }))?;
    let budget = 64 * n as u64 + 1024;
    rt.register_handler(assign, Box::new(Recolor { graph, color, assign, recolors: &recolors, budget }))?;

    let partition = *rt.partition();
    let mut initial = vec![UNCOLORED; n];
    for p in 0..cfg.procs {
        let block = partition.range(p);
        for v in block.clone() {
            initial[v] = smallest_free(graph, v, |w| if block.contains(&w) { initial[w] } else { UNCOLORED });
        }
    }
    for (v, &x) in initial.iter().enumerate() {
        super::seed(&rt, assign, v, x)?;
    }
    let report = rt.run_to_quiescence()?;
    let colors: Vec<u64> = color.cells().map(|c| rt.heap().load(c)).collect();
    let mut distinct = colors.clone();
    distinct.sort_unstable();
    distinct.dedup();
    Ok(ColoringResult { num_colors: distinct.len(), colors, recolors: recolors.load(SeqCst), report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeList;

    #[test]
    fn smallest_free_skips_used() {
        let g = Graph::build_csr(&EdgeList::new(4, vec![(0, 1), (0, 2), (0, 3)]), false).unwrap();
        let cols = [UNCOLORED, 0, 2, 1];
        assert_eq!(smallest_free(&g, 0, |w| cols[w]), 3);
        let cols = [UNCOLORED, 0, 2, 2];
        assert_eq!(smallest_free(&g, 0, |w| cols[w]), 1);
    }

    #[test]
    fn edgeless_single_color() {
        let g = Graph::build_csr(&EdgeList::new(5, vec![]), false).unwrap();
        let r = boman_coloring(&g, &RuntimeConfig::default()).unwrap();
        assert_eq!(r.colors, vec![0; 5]);
        assert_eq!(r.num_colors, 1);
    }

    #[test]
    fn clique_needs_all_colors() {
        let edges = (0..4).flat_map(|u| (u + 1..4).map(move |v| (u, v))).collect();
        let g = Graph::build_csr(&EdgeList::new(4, edges), false).unwrap();
        let cfg = RuntimeConfig { procs: 4, ..RuntimeConfig::default() };
        let r = boman_coloring(&g, &cfg).unwrap();
        assert_eq!(r.num_colors, 4);
        for (u, v, _) in g.edges() {
            assert_ne!(r.colors[u], r.colors[v]);
        }
    }
}
