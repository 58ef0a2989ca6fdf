use super::{runtime, AlgoError};
use crate::graph::{Graph, Partition, VertexId};
use crate::runtime::{MessageClass, OpOutput, Operator, OperatorId, RunReport, RuntimeConfig, SpawnCtx};
use crate::txn::{AccOp, AtomicCtx, HeapBuilder, Region, TxResult, TxnCtx};

pub const DEFAULT_DAMPING: f64 = 0.85;

#[derive(Debug, Clone)]
pub struct PrResult {
    pub ranks: Vec<f64>,
    pub report: RunReport,
}

/// Adds `f64::from_bits(param)` to the rank of a vertex.
struct RankAdd {
    rank: Region,
}

impl Operator for RankAdd {
    fn class(&self) -> MessageClass {
        MessageClass::FF_AS
    }

    fn apply(&self, ctx: &mut TxnCtx<'_>, v: VertexId, bits: u64) -> TxResult<OpOutput> {
        let c = self.rank.at(v);
        let r = ctx.read_f64(c)?;
        ctx.write_f64(c, r + f64::from_bits(bits))?;
        Ok(OpOutput::OK)
    }

    fn supports_atomics(&self) -> bool {
        true
    }

    fn apply_atomic(&self, ctx: &mut AtomicCtx<'_>, v: VertexId, bits: u64) -> OpOutput {
        ctx.acc(self.rank.at(v), bits, AccOp::FloatSum);
        OpOutput::OK
    }
}

/// Vertex-centric update: teleport share to `v`, damped share of the stale
/// rank of `v` to each out-neighbor. Neighbors on other processes get a
/// [`RankAdd`] message once the activity commits.
struct Scatter<'g> {
    graph: &'g Graph,
    partition: Partition,
    rank: Region,
    old: Region,
    teleport: f64,
    d: f64,
    add: OperatorId,
}

impl Scatter<'_> {
    fn share(&self, old: f64, v: VertexId) -> Option<f64> {
        let deg = self.graph.degree(v);
        (deg > 0).then(|| self.d * old / deg as f64)
    }
}

impl Operator for Scatter<'_> {
    fn class(&self) -> MessageClass {
        MessageClass::FF_AS
    }

    fn apply(&self, ctx: &mut TxnCtx<'_>, v: VertexId, _: u64) -> TxResult<OpOutput> {
        let own = self.rank.at(v);
        let r = ctx.read_f64(own)?;
        ctx.write_f64(own, r + self.teleport)?;
        if let Some(share) = self.share(ctx.heap().load_f64(self.old.at(v)), v) {
            let home = self.partition.owner_unchecked(v);
            for &w in self.graph.neighbors(v) {
                if self.partition.owner_unchecked(w) == home {
                    let c = self.rank.at(w);
                    let r = ctx.read_f64(c)?;
                    ctx.write_f64(c, r + share)?;
                }
            }
        }
        Ok(OpOutput::OK)
    }

    fn supports_atomics(&self) -> bool {
        true
    }

    fn apply_atomic(&self, ctx: &mut AtomicCtx<'_>, v: VertexId, _: u64) -> OpOutput {
        ctx.acc(self.rank.at(v), self.teleport.to_bits(), AccOp::FloatSum);
        if let Some(share) = self.share(ctx.heap().load_f64(self.old.at(v)), v) {
            let home = self.partition.owner_unchecked(v);
            for &w in self.graph.neighbors(v) {
                if self.partition.owner_unchecked(w) == home {
                    ctx.acc(self.rank.at(w), share.to_bits(), AccOp::FloatSum);
                }
            }
        }
        OpOutput::OK
    }

    fn committed(&self, ctx: &mut SpawnCtx<'_>, v: VertexId, _: u64, _: &OpOutput) {
        let Some(share) = self.share(ctx.heap().load_f64(self.old.at(v)), v) else { return };
        let home = self.partition.owner_unchecked(v);
        for &w in self.graph.neighbors(v) {
            if self.partition.owner_unchecked(w) != home {
                ctx.spawn(self.add, w, share.to_bits());
            }
        }
    }
}

/// `iterations` rounds starting from the uniform distribution. Vertices
/// without out-edges scatter nothing.
pub fn pagerank(graph: &Graph, d: f64, iterations: usize, cfg: &RuntimeConfig) -> Result<PrResult, AlgoError> {
    if !(d > 0.0 && d < 1.0) {
        return Err(AlgoError::Input(format!("damping factor {d} outside (0, 1)")));
    }
    let n = graph.num_vertices();
    let mut b = HeapBuilder::new();
    let rank = b.alloc(n, (1.0 / n.max(1) as f64).to_bits());
    let old = b.alloc(n, 0);
    let mut rt = runtime(cfg, graph, b.build())?;
    let add = rt.register_operator(Box::new(RankAdd { rank }))?;
    let scatter = rt.register_operator(Box::new(Scatter {
        graph,
        partition: *rt.partition(),
        rank,
        old,
        teleport: (1.0 - d) / n.max(1) as f64,
        d,
        add,
    }))?;

    let mut report = RunReport::default();
    for _ in 0..iterations {
        let heap = rt.heap();
        let snapshot: Vec<u64> = rank.cells().map(|c| heap.load(c)).collect();
        heap.store_all(old, snapshot);
        heap.store_all(rank, std::iter::repeat(0f64.to_bits()).take(n));
        for v in 0..n {
            super::seed(&rt, scatter, v, 0)?;
        }
        report.absorb(&rt.run_to_quiescence()?);
    }
    let ranks = rank.cells().map(|c| rt.heap().load_f64(c)).collect();
    Ok(PrResult { ranks, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeList;

    #[test]
    fn isolated_vertex() {
        let g = Graph::build_csr(&EdgeList::new(1, vec![]), true).unwrap();
        for iters in 1..4 {
            let r = pagerank(&g, 0.85, iters, &RuntimeConfig::default()).unwrap();
            assert!((r.ranks[0] - 0.15).abs() < 1e-15);
        }
    }

    #[test]
    fn two_vertices_one_arc() {
        let g = Graph::build_csr(&EdgeList::new(2, vec![(0, 1)]), true).unwrap();
        let r = pagerank(&g, 0.85, 1, &RuntimeConfig::default()).unwrap();
        assert!((r.ranks[0] - 0.075).abs() < 1e-12);
        assert!((r.ranks[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn damping_out_of_range() {
        let g = Graph::build_csr(&EdgeList::new(1, vec![]), true).unwrap();
        for d in [0.0, 1.0, -0.5, f64::NAN] {
            assert!(matches!(pagerank(&g, d, 1, &RuntimeConfig::default()), Err(AlgoError::Input(_))));
        }
    }

    #[test]
    fn one_iteration_applies_every_contribution() {
        let g = Graph::build_csr(&EdgeList::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]), false).unwrap();
        let cfg = RuntimeConfig { procs: 2, ..RuntimeConfig::default() };
        let r = pagerank(&g, 0.85, 1, &cfg).unwrap();
        let remote = g
            .edges()
            .iter()
            .filter(|(u, v, _)| (*u < 2) != (*v < 2))
            .count()
            * 2;
        assert_eq!(r.report.executed as usize, 4 + remote);
        assert!((r.ranks.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
