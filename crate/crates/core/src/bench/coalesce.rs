use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{BenchError, Measured, BUILD_ID};
use crate::graph::{Partition, VertexId};
use crate::runtime::{MessageClass, OpOutput, Operator, Runtime, RuntimeConfig};
use crate::txn::{AccOp, AtomicCtx, CostModel, HeapBuilder, Mechanism, Region, TxResult, TxnCtx};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemoteKind {
    /// Set a remote vertex from 0 to 1.
    Mark,
    /// Add one to a remote vertex.
    Increment,
}

impl fmt::Display for RemoteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RemoteKind::Mark => "mark",
            RemoteKind::Increment => "increment",
        })
    }
}

impl FromStr for RemoteKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mark" => Ok(RemoteKind::Mark),
            "increment" | "inc" => Ok(RemoteKind::Increment),
            _ => Err(BenchError::Config(format!("unknown remote operation {s:?} (expected mark or increment)"))),
        }
    }
}

struct Remote {
    kind: RemoteKind,
    cells: Region,
}

impl Operator for Remote {
    fn class(&self) -> MessageClass {
        MessageClass::FF_AS
    }

    fn apply(&self, ctx: &mut TxnCtx<'_>, v: VertexId, _: u64) -> TxResult<OpOutput> {
        let c = self.cells.at(v);
        match self.kind {
            RemoteKind::Mark => {
                if ctx.read(c)? == 0 {
                    ctx.write(c, 1)?;
                }
            }
            RemoteKind::Increment => {
                let x = ctx.read(c)?;
                ctx.write(c, x + 1)?;
            }
        }
        Ok(OpOutput::OK)
    }

    fn supports_atomics(&self) -> bool {
        true
    }

    fn apply_atomic(&self, ctx: &mut AtomicCtx<'_>, v: VertexId, _: u64) -> OpOutput {
        let c = self.cells.at(v);
        match self.kind {
            RemoteKind::Mark => {
                ctx.cas(c, 0, 1);
            }
            RemoteKind::Increment => ctx.acc(c, 1, AccOp::Sum),
        }
        OpOutput::OK
    }
}

#[derive(Debug, Clone)]
pub struct CoalesceConfig {
    pub kind: RemoteKind,
    pub procs: usize,
    pub threads: usize,
    pub vertices_per_proc: usize,
    /// Remote operations each process issues.
    pub ops_per_proc: usize,
    /// C values for the transactional runs.
    pub c_range: Vec<usize>,
    pub htm: Mechanism,
    pub seed: u64,
    pub cost: CostModel,
}

impl Default for CoalesceConfig {
    fn default() -> Self {
        CoalesceConfig {
            kind: RemoteKind::Increment,
            procs: 4,
            threads: 1,
            vertices_per_proc: 1024,
            ops_per_proc: 4096,
            c_range: vec![1, 2, 4, 8, 16, 32, 64, 128],
            htm: Mechanism::Htm(crate::txn::RetryPolicy::rtm()),
            seed: 1,
            cost: CostModel::with_network(2000.0, 50.0),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoalesceRow {
    pub benchmark: String,
    pub build: &'static str,
    pub seed: u64,
    pub policy: &'static str,
    pub procs: usize,
    pub threads: usize,
    pub coarsen: usize,
    pub coalesce: usize,
    pub ops: u64,
    pub makespan_ns: f64,
    /// Makespan divided by the operations one process issues.
    pub per_op_ns: f64,
    pub batches: u64,
    pub messages: u64,
    pub wall_ns: u64,
    pub commits: u64,
    pub total_aborts: u64,
    pub aborts_conflict: u64,
    pub aborts_capacity: u64,
    pub aborts_other: u64,
    pub serializations: u64,
    pub atomic_ops: u64,
}

fn run_point(cfg: &CoalesceConfig, mechanism: Mechanism, c: usize) -> Result<Measured<CoalesceRow>, BenchError> {
    let n = cfg.procs * cfg.vertices_per_proc;
    let partition = Partition::new(n, cfg.procs);
    let mut b = HeapBuilder::new();
    let cells = b.alloc(n, 0);
    let rc = RuntimeConfig {
        procs: cfg.procs,
        threads: cfg.threads,
        coarsen: 1,
        coalesce: c,
        mechanism,
        seed: cfg.seed,
        cost: cfg.cost,
        ..RuntimeConfig::default()
    };
    let mut rt = Runtime::new(rc, partition, b.build())?;
    let op = rt.register_operator(Box::new(Remote { kind: cfg.kind, cells }))?;

    let mut expect = vec![0u64; n];
    for p in 0..cfg.procs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(p as u64));
        for _ in 0..cfg.ops_per_proc {
            // uniform over the other processes' vertices
            let mut v = rng.gen_range(0..n - cfg.vertices_per_proc);
            if v >= partition.range(p).start {
                v += cfg.vertices_per_proc;
            }
            expect[v] += 1;
            rt.send(p, op, v, 0)?;
        }
        rt.flush_all(p);
    }
    let report = rt.run_to_quiescence()?;
    for (v, &k) in expect.iter().enumerate() {
        let want = match cfg.kind {
            RemoteKind::Mark => u64::from(k > 0),
            RemoteKind::Increment => k,
        };
        let got = rt.heap().load(cells.at(v));
        if got != want {
            return Err(BenchError::Validation(format!("vertex {v} holds {got}, expected {want}")));
        }
    }
    let total = (cfg.procs * cfg.ops_per_proc) as u64;
    if report.executed != total {
        return Err(BenchError::Validation(format!("{} of {total} operations executed", report.executed)));
    }
    let s = report.stats;
    let row = CoalesceRow {
        benchmark: format!("coalesce-{}", cfg.kind),
        build: BUILD_ID,
        seed: cfg.seed,
        policy: mechanism.name(),
        procs: cfg.procs,
        threads: cfg.threads,
        coarsen: 1,
        coalesce: c,
        ops: total,
        makespan_ns: report.makespan_ns,
        per_op_ns: report.makespan_ns / cfg.ops_per_proc as f64,
        batches: report.net.batches,
        messages: report.net.messages,
        wall_ns: report.wall.as_nanos() as u64,
        commits: s.commits,
        total_aborts: s.total_aborts,
        aborts_conflict: s.aborts_conflict,
        aborts_capacity: s.aborts_capacity,
        aborts_other: s.aborts_other,
        serializations: s.serializations,
        atomic_ops: s.atomic_ops,
    };
    let capacity = match mechanism {
        Mechanism::Htm(p) => Some(p.capacity_cells()),
        _ => None,
    };
    Ok(Measured { row, stats: s, capacity })
}

/// The atomics baseline without coalescing, followed by the transactional
/// mechanism at every C in the range.
pub fn bench_coalesce_sweep(cfg: &CoalesceConfig) -> Result<Vec<Measured<CoalesceRow>>, BenchError> {
    if cfg.procs < 2 {
        return Err(BenchError::Config("remote operations need at least two processes".into()));
    }
    if cfg.threads == 0 || cfg.vertices_per_proc == 0 || cfg.ops_per_proc == 0 {
        return Err(BenchError::Config("threads, vertices and operations must be positive".into()));
    }
    if cfg.c_range.is_empty() || cfg.c_range.contains(&0) {
        return Err(BenchError::Config("C values must be positive".into()));
    }
    if !cfg.htm.is_htm() {
        return Err(BenchError::Config(format!("{} is not a transactional policy", cfg.htm.name())));
    }
    let mut rows = vec![run_point(cfg, Mechanism::Atomics, 1)?];
    for &c in &cfg.c_range {
        rows.push(run_point(cfg, cfg.htm, c)?);
    }
    Ok(rows)
}

/// Smallest C at which a transactional row beats the atomics baseline per
/// operation.
pub fn coalesce_crossover(rows: &[CoalesceRow]) -> Option<usize> {
    let base = rows.iter().find(|r| r.policy == "atomics")?.per_op_ns;
    rows.iter().filter(|r| r.policy != "atomics" && r.per_op_ns < base).map(|r| r.coalesce).min()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sweep_crosses() {
        let cfg = CoalesceConfig { procs: 2, vertices_per_proc: 64, ops_per_proc: 256, c_range: vec![1, 16], ..CoalesceConfig::default() };
        let rows: Vec<CoalesceRow> = bench_coalesce_sweep(&cfg).unwrap().into_iter().map(|m| m.row).collect();
        assert_eq!(rows.len(), 3);
        assert_eq!(coalesce_crossover(&rows), Some(16));
        assert!(rows[1].per_op_ns >= rows[0].per_op_ns);
    }

    #[test]
    fn mark_sets_targets_once() {
        let cfg = CoalesceConfig {
            kind: RemoteKind::Mark,
            procs: 3,
            vertices_per_proc: 8,
            ops_per_proc: 100,
            c_range: vec![4],
            ..CoalesceConfig::default()
        };
        assert_eq!(bench_coalesce_sweep(&cfg).unwrap().len(), 2);
    }
}
