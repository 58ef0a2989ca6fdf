use serde::Serialize;

use super::{BenchError, Measured, BUILD_ID};
use crate::algorithms::{
    bfs, boman_coloring, boruvka_mst, oracle, pagerank, st_connectivity, Algorithm, DEFAULT_DAMPING,
};
use crate::graph::{Graph, VertexId};
use crate::runtime::{RunReport, RuntimeConfig};
use crate::txn::Mechanism;

#[derive(Debug, Clone)]
pub struct AlgorithmConfig {
    pub algorithm: Algorithm,
    pub runtime: RuntimeConfig,
    /// BFS source.
    pub source: VertexId,
    pub s: VertexId,
    pub t: VertexId,
    pub damping: f64,
    pub iterations: usize,
    /// Largest PageRank deviation from the reference still accepted.
    pub pr_tolerance: f64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            algorithm: Algorithm::Bfs,
            runtime: RuntimeConfig::default(),
            source: 0,
            s: 0,
            t: 1,
            damping: DEFAULT_DAMPING,
            iterations: 10,
            pr_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmRow {
    pub benchmark: &'static str,
    pub build: &'static str,
    pub seed: u64,
    pub policy: &'static str,
    pub procs: usize,
    pub threads: usize,
    pub coarsen: usize,
    pub coalesce: usize,
    pub vertices: usize,
    pub arcs: usize,
    /// Algorithm-specific summary: reached vertices, colors, forest weight,
    /// 1/0 for connectivity, rank sum.
    pub result: f64,
    pub makespan_ns: f64,
    pub wall_ns: u64,
    pub spawned: u64,
    pub executed: u64,
    pub activities: u64,
    pub batches: u64,
    pub messages: u64,
    pub commits: u64,
    pub total_aborts: u64,
    pub aborts_conflict: u64,
    pub aborts_capacity: u64,
    pub aborts_other: u64,
    pub serializations: u64,
    pub operator_failures: u64,
    pub atomic_ops: u64,
}

fn invalid(msg: impl Into<String>) -> BenchError {
    BenchError::Validation(msg.into())
}

/// Runs one algorithm and checks its output against the sequential
/// reference before producing a row.
pub fn bench_algorithm(graph: &Graph, cfg: &AlgorithmConfig) -> Result<Measured<AlgorithmRow>, BenchError> {
    let rc = &cfg.runtime;
    let (result, report): (f64, RunReport) = match cfg.algorithm {
        Algorithm::Bfs => {
            let r = bfs(graph, cfg.source, rc)?;
            if r.distances != oracle::bfs_distances(graph, cfg.source) {
                return Err(invalid("BFS distances differ from the reference"));
            }
            (r.reached() as f64, r.report)
        }
        Algorithm::PageRank => {
            let r = pagerank(graph, cfg.damping, cfg.iterations, rc)?;
            let expect = oracle::pagerank(graph, cfg.damping, cfg.iterations);
            let worst = r.ranks.iter().zip(&expect).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if !(worst <= cfg.pr_tolerance) {
                return Err(invalid(format!("PageRank deviates by {worst:e} from the reference")));
            }
            (r.ranks.iter().sum(), r.report)
        }
        Algorithm::Mst => {
            let r = boruvka_mst(graph, rc)?;
            let (_, weight) = oracle::kruskal(graph);
            if (r.total_weight - weight).abs() > 1e-9 * weight.abs().max(1.0) {
                return Err(invalid(format!("forest weight {} differs from reference {weight}", r.total_weight)));
            }
            (r.total_weight, r.report)
        }
        Algorithm::St => {
            let r = st_connectivity(graph, cfg.s, cfg.t, rc)?;
            if r.connected != oracle::connected(graph, cfg.s, cfg.t) {
                return Err(invalid(format!("connectivity of {} and {} differs from the reference", cfg.s, cfg.t)));
            }
            (f64::from(u8::from(r.connected)), r.report)
        }
        Algorithm::Color => {
            let r = boman_coloring(graph, rc)?;
            let bad = oracle::monochromatic_edges(graph, &r.colors);
            if bad != 0 {
                return Err(invalid(format!("{bad} monochromatic edges")));
            }
            if r.num_colors > graph.max_degree() + 1 {
                return Err(invalid(format!("{} colors exceed max degree + 1", r.num_colors)));
            }
            (r.num_colors as f64, r.report)
        }
    };
    let s = report.stats;
    let row = AlgorithmRow {
        benchmark: cfg.algorithm.name(),
        build: BUILD_ID,
        seed: rc.seed,
        policy: rc.mechanism.name(),
        procs: rc.procs,
        threads: rc.threads,
        coarsen: rc.coarsen,
        coalesce: rc.coalesce,
        vertices: graph.num_vertices(),
        arcs: graph.num_arcs(),
        result,
        makespan_ns: report.makespan_ns,
        wall_ns: report.wall.as_nanos() as u64,
        spawned: report.spawned,
        executed: report.executed,
        activities: report.activities,
        batches: report.net.batches,
        messages: report.net.messages,
        commits: s.commits,
        total_aborts: s.total_aborts,
        aborts_conflict: s.aborts_conflict,
        aborts_capacity: s.aborts_capacity,
        aborts_other: s.aborts_other,
        serializations: s.serializations,
        operator_failures: s.operator_failures,
        atomic_ops: s.atomic_ops,
    };
    let capacity = match rc.mechanism {
        Mechanism::Htm(p) => Some(p.capacity_cells()),
        _ => None,
    };
    Ok(Measured { row, stats: s, capacity })
}
