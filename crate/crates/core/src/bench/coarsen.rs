use serde::Serialize;

use super::{median, BenchError, Measured, BUILD_ID};
use crate::algorithms::{bfs, oracle, BfsResult};
use crate::graph::{Graph, VertexId};
use crate::runtime::RuntimeConfig;

/// `{1, 16, 32, …, 320}`.
pub fn default_m_range() -> Vec<usize> {
    std::iter::once(1).chain((16..=320).step_by(16)).collect()
}

#[derive(Debug, Clone)]
pub struct CoarsenConfig {
    pub source: VertexId,
    /// M values to sweep; `runtime.coarsen` is overridden.
    pub m_range: Vec<usize>,
    pub reps: usize,
    pub runtime: RuntimeConfig,
}

impl Default for CoarsenConfig {
    fn default() -> Self {
        CoarsenConfig { source: 0, m_range: default_m_range(), reps: 3, runtime: RuntimeConfig::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoarsenRow {
    pub benchmark: &'static str,
    pub build: &'static str,
    pub seed: u64,
    pub policy: &'static str,
    pub procs: usize,
    pub threads: usize,
    pub coarsen: usize,
    pub coalesce: usize,
    pub reps: usize,
    pub vertices: usize,
    pub reached: usize,
    /// Median over the repetitions.
    pub makespan_ns: f64,
    pub per_vertex_ns: f64,
    pub wall_ns: u64,
    pub activities: u64,
    pub commits: u64,
    pub total_aborts: u64,
    pub aborts_conflict: u64,
    pub aborts_capacity: u64,
    pub aborts_other: u64,
    pub serializations: u64,
    pub atomic_ops: u64,
}

/// BFS from `source` once per M, each point the median of `reps` runs.
pub fn bench_coarsen_sweep(graph: &Graph, cfg: &CoarsenConfig) -> Result<Vec<Measured<CoarsenRow>>, BenchError> {
    if cfg.reps == 0 || cfg.m_range.is_empty() {
        return Err(BenchError::Config("need at least one repetition and one M".into()));
    }
    if cfg.source >= graph.num_vertices() {
        return Err(BenchError::Config(format!("source {} out of range", cfg.source)));
    }
    let expect = oracle::bfs_distances(graph, cfg.source);
    let mut rows = Vec::new();
    for &m in &cfg.m_range {
        let rc = RuntimeConfig { coarsen: m, ..cfg.runtime.clone() };
        let mut runs: Vec<BfsResult> = Vec::with_capacity(cfg.reps);
        for _ in 0..cfg.reps {
            let r = bfs(graph, cfg.source, &rc)?;
            if r.distances != expect {
                return Err(BenchError::Validation(format!("BFS distances differ from the reference at M={m}")));
            }
            runs.push(r);
        }
        let spans: Vec<f64> = runs.iter().map(|r| r.report.makespan_ns).collect();
        let mid = median(&spans);
        // counters come from the run closest to the median
        let pick = runs
            .iter()
            .min_by(|a, b| (a.report.makespan_ns - mid).abs().total_cmp(&(b.report.makespan_ns - mid).abs()))
            .expect("reps > 0");
        let s = pick.report.stats;
        let reached = pick.reached();
        let row = CoarsenRow {
            benchmark: "coarsen-bfs",
            build: BUILD_ID,
            seed: rc.seed,
            policy: rc.mechanism.name(),
            procs: rc.procs,
            threads: rc.threads,
            coarsen: m,
            coalesce: rc.coalesce,
            reps: cfg.reps,
            vertices: graph.num_vertices(),
            reached,
            makespan_ns: mid,
            per_vertex_ns: mid / reached as f64,
            wall_ns: pick.report.wall.as_nanos() as u64,
            activities: pick.report.activities,
            commits: s.commits,
            total_aborts: s.total_aborts,
            aborts_conflict: s.aborts_conflict,
            aborts_capacity: s.aborts_capacity,
            aborts_other: s.aborts_other,
            serializations: s.serializations,
            atomic_ops: s.atomic_ops,
        };
        let capacity = match rc.mechanism {
            crate::txn::Mechanism::Htm(p) => Some(p.capacity_cells()),
            _ => None,
        };
        rows.push(Measured { row, stats: s, capacity });
    }
    Ok(rows)
}
