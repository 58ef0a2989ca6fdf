use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Barrier};
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{BenchError, Measured, BUILD_ID};
use crate::model::{CostSample, SampleMechanism};
use crate::txn::{AccOp, CostModel, Heap, HeapBuilder, Mechanism, Region, RunStats, TxResult, TxnCtx, Worker};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingleKind {
    /// Mark an unmarked vertex.
    Cas,
    /// Increment a vertex.
    Acc,
}

impl fmt::Display for SingleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SingleKind::Cas => "cas",
            SingleKind::Acc => "acc",
        })
    }
}

impl FromStr for SingleKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cas" => Ok(SingleKind::Cas),
            "acc" => Ok(SingleKind::Acc),
            _ => Err(BenchError::Config(format!("unknown operation kind {s:?} (expected cas or acc)"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SingleVertexConfig {
    pub kind: SingleKind,
    /// Operations per vertex.
    pub contention: usize,
    pub vertices: usize,
    pub threads: usize,
    pub mechanism: Mechanism,
    pub seed: u64,
    pub cost: CostModel,
    /// Yield between the read and the write of a transaction, so that
    /// threads sharing a core still overlap.
    pub interleave: bool,
}

impl Default for SingleVertexConfig {
    fn default() -> Self {
        SingleVertexConfig {
            kind: SingleKind::Cas,
            contention: 10,
            vertices: 256,
            threads: 1,
            mechanism: Mechanism::Htm(crate::txn::RetryPolicy::rtm()),
            seed: 1,
            cost: CostModel::default(),
            interleave: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SingleVertexRow {
    pub benchmark: String,
    pub build: &'static str,
    pub seed: u64,
    pub policy: &'static str,
    pub threads: usize,
    pub vertices: usize,
    pub contention: usize,
    pub ops: u64,
    pub mean_time_ns: f64,
    pub makespan_ns: f64,
    pub wall_ns: u64,
    pub commits: u64,
    pub total_aborts: u64,
    pub aborts_conflict: u64,
    pub aborts_capacity: u64,
    pub aborts_other: u64,
    pub serializations: u64,
    pub atomic_ops: u64,
}

/// Runs `per_thread(worker, thread)` on `threads` scoped threads.
fn run_threads(
    threads: usize,
    seed: u64,
    cost: CostModel,
    stats: &Arc<RunStats>,
    per_thread: impl Fn(&mut Worker, usize) -> Result<(), BenchError> + Sync,
) -> Result<Vec<f64>, BenchError> {
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let per_thread = &per_thread;
                let stats = stats.clone();
                s.spawn(move || {
                    let mut w = Worker::new(t, seed, cost, stats);
                    per_thread(&mut w, t).map(|()| w.clock())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("benchmark thread panicked")).collect()
    })
}

/// Executes `body` once as one activity under `mechanism`; `atomic` is the
/// equivalent built from single-word atomics.
fn activity(
    w: &mut Worker,
    heap: &Heap,
    mechanism: &Mechanism,
    body: impl FnMut(&mut TxnCtx<'_>) -> TxResult<()>,
    atomic: impl FnOnce(&mut crate::txn::AtomicCtx<'_>),
) -> Result<(), BenchError> {
    match mechanism {
        Mechanism::Htm(policy) => {
            w.execute(heap, policy, body)?;
        }
        Mechanism::GlobalLock => {
            w.execute_locked(heap, body)?;
        }
        Mechanism::Atomics => {
            let overhead = w.cost().activity_overhead;
            w.charge(overhead);
            atomic(&mut w.atomics(heap));
        }
    }
    Ok(())
}

/// Gives other threads a chance to run inside the transaction. The number
/// of yields is random so that threads sharing a core do not settle into a
/// fixed rotation.
fn overlap(ctx: &mut TxnCtx<'_>, on: bool) {
    if on {
        for _ in 0..ctx.rng().gen_range(0..=2) {
            std::thread::yield_now();
        }
    }
}

fn capacity(m: &Mechanism) -> Option<usize> {
    match m {
        Mechanism::Htm(p) => Some(p.capacity_cells()),
        _ => None,
    }
}

/// `contention` operations on each of `vertices` vertices. The threads
/// visit the vertices in lockstep and split each vertex's operations
/// round-robin, so they contend on one vertex at a time.
pub fn bench_single_vertex(cfg: &SingleVertexConfig) -> Result<Measured<SingleVertexRow>, BenchError> {
    if cfg.threads == 0 || cfg.vertices == 0 || cfg.contention == 0 {
        return Err(BenchError::Config("threads, vertices and contention must be positive".into()));
    }
    let mut b = HeapBuilder::new();
    let cells = b.alloc(cfg.vertices, 0);
    let heap = b.build();
    let stats = Arc::new(RunStats::new());
    let total = cfg.vertices * cfg.contention;
    let interleave = cfg.interleave && cfg.threads > 1;
    let start = Instant::now();
    let barrier = Barrier::new(cfg.threads);
    let clocks = run_threads(cfg.threads, cfg.seed, cfg.cost, &stats, |w, t| {
        for v in 0..cfg.vertices {
            // all threads start on a vertex together
            if cfg.threads > 1 {
                barrier.wait();
            }
            let c = cells.at(v);
            for _ in (t..cfg.contention).step_by(cfg.threads) {
                match cfg.kind {
                    SingleKind::Cas => activity(
                        w,
                        &heap,
                        &cfg.mechanism,
                        |ctx| {
                            if ctx.read(c)? == 0 {
                                overlap(ctx, interleave);
                                ctx.write(c, 1)?;
                            }
                            Ok(())
                        },
                        |a| {
                            a.cas(c, 0, 1);
                        },
                    )?,
                    SingleKind::Acc => activity(
                        w,
                        &heap,
                        &cfg.mechanism,
                        |ctx| {
                            let v = ctx.read(c)?;
                            overlap(ctx, interleave);
                            ctx.write(c, v + 1)
                        },
                        |a| a.acc(c, 1, AccOp::Sum),
                    )?,
                }
            }
        }
        Ok(())
    })?;
    let wall = start.elapsed();

    let expect = match cfg.kind {
        SingleKind::Cas => 1,
        SingleKind::Acc => cfg.contention as u64,
    };
    if let Some(v) = cells.cells().find(|&c| heap.load(c) != expect) {
        return Err(BenchError::Validation(format!("vertex {} holds {} instead of {expect}", v.0, heap.load(v))));
    }
    let s = stats.snapshot();
    let row = SingleVertexRow {
        benchmark: format!("single-vertex-{}", cfg.kind),
        build: BUILD_ID,
        seed: cfg.seed,
        policy: cfg.mechanism.name(),
        threads: cfg.threads,
        vertices: cfg.vertices,
        contention: cfg.contention,
        ops: total as u64,
        mean_time_ns: clocks.iter().sum::<f64>() / total as f64,
        makespan_ns: clocks.iter().copied().fold(0.0, f64::max),
        wall_ns: wall.as_nanos() as u64,
        commits: s.commits,
        total_aborts: s.total_aborts,
        aborts_conflict: s.aborts_conflict,
        aborts_capacity: s.aborts_capacity,
        aborts_other: s.aborts_other,
        serializations: s.serializations,
        atomic_ops: s.atomic_ops,
    };
    Ok(Measured { row, stats: s, capacity: capacity(&cfg.mechanism) })
}

#[derive(Debug, Clone)]
pub struct ModelSweepConfig {
    /// Vertices per activity.
    pub n_range: Vec<usize>,
    /// Activities per point.
    pub activities: usize,
    /// Vertices activities draw from.
    pub pool: usize,
    pub threads: usize,
    /// Transactional mechanism compared against atomics.
    pub htm: Mechanism,
    pub seed: u64,
    pub cost: CostModel,
    pub interleave: bool,
}

impl Default for ModelSweepConfig {
    fn default() -> Self {
        ModelSweepConfig {
            n_range: (1..=16).collect(),
            activities: 2000,
            pool: 4096,
            threads: 1,
            htm: Mechanism::Htm(crate::txn::RetryPolicy::rtm()),
            seed: 1,
            cost: CostModel::default(),
            interleave: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelRow {
    pub benchmark: &'static str,
    pub build: &'static str,
    pub seed: u64,
    pub mechanism: SampleMechanism,
    pub policy: &'static str,
    pub threads: usize,
    pub n_vertices: u64,
    pub activities: u64,
    pub mean_time_ns: f64,
    pub commits: u64,
    pub total_aborts: u64,
    pub aborts_conflict: u64,
    pub aborts_capacity: u64,
    pub aborts_other: u64,
    pub serializations: u64,
    pub atomic_ops: u64,
}

impl ModelRow {
    pub fn sample(&self) -> CostSample {
        CostSample { mechanism: self.mechanism, n_vertices: self.n_vertices, mean_time_ns: self.mean_time_ns }
    }
}

fn model_point(
    cfg: &ModelSweepConfig,
    mechanism: &Mechanism,
    n: usize,
) -> Result<Measured<ModelRow>, BenchError> {
    let mut b = HeapBuilder::new();
    let cells: Region = b.alloc(cfg.pool, 0);
    let heap = b.build();
    let stats = Arc::new(RunStats::new());
    let interleave = cfg.interleave && cfg.threads > 1;
    let clocks = run_threads(cfg.threads, cfg.seed, cfg.cost, &stats, |w, t| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((n as u64) << 20) ^ t as u64);
        for _ in (t..cfg.activities).step_by(cfg.threads) {
            let mut picked: Vec<usize> = sample(&mut rng, cfg.pool, n).into_vec();
            picked.sort_unstable();
            activity(
                w,
                &heap,
                mechanism,
                |ctx| {
                    for (k, &v) in picked.iter().enumerate() {
                        let c = cells.at(v);
                        let x = ctx.read(c)?;
                        if k == 0 {
                            overlap(ctx, interleave);
                        }
                        ctx.write(c, x + 1)?;
                    }
                    Ok(())
                },
                |a| {
                    for &v in &picked {
                        a.acc(cells.at(v), 1, AccOp::Sum);
                    }
                },
            )?;
        }
        Ok(())
    })?;
    let sum: u64 = cells.cells().map(|c| heap.load(c)).sum();
    if sum != (cfg.activities * n) as u64 {
        return Err(BenchError::Validation(format!("{sum} increments applied, expected {}", cfg.activities * n)));
    }
    let s = stats.snapshot();
    let row = ModelRow {
        benchmark: "model-sweep",
        build: BUILD_ID,
        seed: cfg.seed,
        mechanism: if mechanism.is_htm() { SampleMechanism::Htm } else { SampleMechanism::Atomics },
        policy: mechanism.name(),
        threads: cfg.threads,
        n_vertices: n as u64,
        activities: cfg.activities as u64,
        mean_time_ns: clocks.iter().sum::<f64>() / cfg.activities as f64,
        commits: s.commits,
        total_aborts: s.total_aborts,
        aborts_conflict: s.aborts_conflict,
        aborts_capacity: s.aborts_capacity,
        aborts_other: s.aborts_other,
        serializations: s.serializations,
        atomic_ops: s.atomic_ops,
    };
    Ok(Measured { row, stats: s, capacity: capacity(mechanism) })
}

/// Mean cost of an activity modifying `N` vertices, for atomics and for the
/// transactional mechanism, over every `N` in the range.
pub fn bench_model_sweep(cfg: &ModelSweepConfig) -> Result<Vec<Measured<ModelRow>>, BenchError> {
    if !cfg.htm.is_htm() {
        return Err(BenchError::Config(format!("{} is not a transactional policy", cfg.htm)));
    }
    if cfg.n_range.is_empty() || cfg.n_range.iter().any(|&n| n == 0 || n > cfg.pool) {
        return Err(BenchError::Config("vertex counts must lie in 1..=pool".into()));
    }
    if cfg.threads == 0 || cfg.activities == 0 {
        return Err(BenchError::Config("threads and activities must be positive".into()));
    }
    let mut rows = Vec::new();
    for &n in &cfg.n_range {
        rows.push(model_point(cfg, &Mechanism::Atomics, n)?);
        rows.push(model_point(cfg, &cfg.htm, n)?);
    }
    Ok(rows)
}
