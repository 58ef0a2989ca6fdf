use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use aam::algorithms::{AlgoError, Algorithm, DEFAULT_DAMPING};
use aam::bench::{
    bench_algorithm, bench_coalesce_sweep, bench_coarsen_sweep, bench_distributed, bench_model_sweep,
    bench_single_vertex, coalesce_crossover, default_m_range, write_csv, AlgorithmConfig, BenchError, CoalesceConfig,
    CoarsenConfig, ModelSweepConfig, RemoteKind, SingleKind, SingleVertexConfig,
};
use aam::graph::{assign_distinct_weights, Graph, GraphSpec};
use aam::model::{fit_both, read_samples};
use aam::net::{DistConfig, Scenario};
use aam::runtime::{ExecMode, RuntimeConfig};
use aam::txn::{CostModel, Mechanism};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "aam", version)]
#[command(about = "Atomic active messages: graph algorithms over emulated hardware transactions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a benchmark and write CSV rows.
    Bench(BenchArgs),
    /// Run one algorithm, check it, and write its stats row.
    Run(RunArgs),
    /// Fit the linear cost model to `mechanism,n_vertices,mean_time_ns` samples.
    Fit {
        csv: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Benchmark {
    SingleVertexCas,
    SingleVertexAcc,
    CoarsenSweep,
    CoalesceSweep,
    DistributedScenario,
    ModelSweep,
    AlgorithmRun,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// rtm, hle, bgq-short, bgq-long, atomics or locks.
    #[arg(long, default_value = "rtm")]
    policy: Mechanism,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 1)]
    procs: usize,
    /// Operators per activity (M).
    #[arg(long, default_value_t = 1)]
    coarsen: usize,
    /// Messages per network batch (C).
    #[arg(long, default_value_t = 1)]
    coalesce: usize,
    /// Wall-clock delivery latency in microseconds.
    #[arg(long, default_value_t = 0.0)]
    net_latency: f64,
    /// Virtual cost of one network batch in ns.
    #[arg(long)]
    batch_cost: Option<f64>,
    /// Virtual cost of one message inside a batch in ns.
    #[arg(long)]
    message_cost: Option<f64>,
    /// Single-threaded seeded schedule instead of OS threads.
    #[arg(long)]
    deterministic: bool,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn cost(&self, default: CostModel) -> CostModel {
        CostModel {
            batch_cost: self.batch_cost.unwrap_or(default.batch_cost),
            message_cost: self.message_cost.unwrap_or(default.message_cost),
            ..default
        }
    }

    fn runtime(&self) -> Result<RuntimeConfig> {
        if !(self.net_latency >= 0.0 && self.net_latency.is_finite()) {
            bail!(BenchError::Config(format!("net latency {} is not a non-negative number", self.net_latency)));
        }
        Ok(RuntimeConfig {
            procs: self.procs,
            threads: self.threads,
            coarsen: self.coarsen,
            coalesce: self.coalesce,
            mechanism: self.policy,
            seed: self.seed,
            cost: self.cost(CostModel::default()),
            net_latency: Duration::from_secs_f64(self.net_latency * 1e-6),
            mode: if self.deterministic { ExecMode::Deterministic } else { ExecMode::Threaded },
            ..RuntimeConfig::default()
        })
    }

    fn sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
            None => Box::new(io::stdout().lock()),
        })
    }
}

#[derive(Args)]
struct AlgoFlags {
    #[arg(long, default_value = "kron:14,16")]
    graph: GraphSpec,
    /// Build directed arcs instead of symmetric edges.
    #[arg(long)]
    directed: bool,
    #[arg(long, default_value_t = 0)]
    source: usize,
    #[arg(long, default_value_t = DEFAULT_DAMPING)]
    damping: f64,
    #[arg(long, default_value_t = 10)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    s: usize,
    #[arg(long, default_value_t = 1)]
    t: usize,
}

impl AlgoFlags {
    fn graph(&self, seed: u64, algorithm: Option<Algorithm>) -> Result<Graph> {
        let g = self.graph.build(seed, self.directed).map_err(BenchError::from)?;
        Ok(if algorithm == Some(Algorithm::Mst) && g.weights().is_none() { assign_distinct_weights(g, seed) } else { g })
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    algorithm: Algorithm,
    #[command(flatten)]
    algo: AlgoFlags,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchArgs {
    benchmark: Benchmark,
    /// Range as `a,b,c` or `start:end:step`.
    #[arg(long)]
    m_range: Option<String>,
    #[arg(long, default_value = "1,2,4,8,16,32,64,128")]
    c_range: String,
    #[arg(long, default_value = "1:16:1")]
    n_range: String,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Operations per vertex in the single-vertex benchmarks.
    #[arg(long, default_value_t = 10)]
    contention: usize,
    #[arg(long, default_value_t = 256)]
    vertices: usize,
    /// Activities per point of the model sweep.
    #[arg(long, default_value_t = 2000)]
    activities: usize,
    #[arg(long, default_value = "o1")]
    scenario: Scenario,
    #[arg(long, default_value = "increment")]
    kind: RemoteKind,
    /// Remote operations per process in the coalescing sweep.
    #[arg(long, default_value_t = 4096)]
    ops: usize,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    #[command(flatten)]
    algo: AlgoFlags,
    #[command(flatten)]
    common: Common,
}

fn parse_range(s: &str) -> Result<Vec<usize>> {
    let bad = || BenchError::Config(format!("invalid range {s:?}"));
    let out: Vec<usize> = if let Some((a, rest)) = s.split_once(':') {
        let (b, step) = rest.split_once(':').unwrap_or((rest, "1"));
        let (a, b, step): (usize, usize, usize) =
            (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?, step.parse().map_err(|_| bad())?);
        if step == 0 {
            bail!(bad());
        }
        (a..=b).step_by(step).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if out.is_empty() || out.contains(&0) {
        bail!(bad());
    }
    Ok(out)
}

fn run_bench(a: &BenchArgs) -> Result<()> {
    let c = &a.common;
    let out = c.sink()?;
    match a.benchmark {
        Benchmark::SingleVertexCas | Benchmark::SingleVertexAcc => {
            let kind = if matches!(a.benchmark, Benchmark::SingleVertexCas) { SingleKind::Cas } else { SingleKind::Acc };
            let cfg = SingleVertexConfig {
                kind,
                contention: a.contention,
                vertices: a.vertices,
                threads: c.threads,
                mechanism: c.policy,
                seed: c.seed,
                cost: c.cost(CostModel::default()),
                interleave: true,
            };
            let m = bench_single_vertex(&cfg)?;
            eprintln!(
                "{}: {} ops, {:.1} ns/op, {} conflict aborts",
                m.row.benchmark, m.row.ops, m.row.mean_time_ns, m.row.aborts_conflict
            );
            write_csv([m.row], out)?;
        }
        Benchmark::CoarsenSweep => {
            let graph = a.algo.graph(c.seed, None)?;
            let m_range = match &a.m_range {
                Some(s) => parse_range(s)?,
                None => default_m_range(),
            };
            let cfg = CoarsenConfig { source: a.algo.source, m_range, reps: a.reps, runtime: c.runtime()? };
            let rows = bench_coarsen_sweep(&graph, &cfg)?;
            for m in &rows {
                eprintln!("M={:<4} {:.1} ns/vertex", m.row.coarsen, m.row.per_vertex_ns);
            }
            write_csv(rows.into_iter().map(|m| m.row), out)?;
        }
        Benchmark::CoalesceSweep => {
            let htm = if c.policy.is_htm() { c.policy } else { Mechanism::Htm(aam::txn::RetryPolicy::rtm()) };
            let cfg = CoalesceConfig {
                kind: a.kind,
                procs: c.procs.max(2),
                threads: c.threads,
                vertices_per_proc: a.vertices,
                ops_per_proc: a.ops,
                c_range: parse_range(&a.c_range)?,
                htm,
                seed: c.seed,
                cost: c.cost(CostModel::with_network(2000.0, 50.0)),
            };
            let rows: Vec<_> = bench_coalesce_sweep(&cfg)?.into_iter().map(|m| m.row).collect();
            match coalesce_crossover(&rows) {
                Some(x) => eprintln!("transactional batches beat remote atomics from C={x}"),
                None => eprintln!("no crossover in the swept C range"),
            }
            write_csv(rows, out)?;
        }
        Benchmark::DistributedScenario => {
            let Mechanism::Htm(policy) = c.policy else {
                bail!(BenchError::Config(format!("{} is not a transactional policy", c.policy.name())));
            };
            let cfg = DistConfig {
                procs: c.procs.max(2),
                threads: c.threads,
                policy,
                seed: c.seed,
                deterministic: c.deterministic,
                cost: c.cost(CostModel::default()),
                ..DistConfig::default()
            };
            let m = bench_distributed(&cfg, a.scenario)?;
            eprintln!("{}: {} backoffs, {:.1} ns/txn", m.row.benchmark, m.row.backoffs, m.row.per_txn_ns);
            write_csv([m.row], out)?;
        }
        Benchmark::ModelSweep => {
            let htm = if c.policy.is_htm() { c.policy } else { Mechanism::Htm(aam::txn::RetryPolicy::rtm()) };
            let cfg = ModelSweepConfig {
                n_range: parse_range(&a.n_range)?,
                activities: a.activities,
                threads: c.threads,
                htm,
                seed: c.seed,
                cost: c.cost(CostModel::default()),
                ..ModelSweepConfig::default()
            };
            let rows = bench_model_sweep(&cfg)?;
            let samples: Vec<_> = rows.iter().map(|m| m.row.sample()).collect();
            if let Ok(f) = fit_both(&samples) {
                print_fits(&f, &mut io::stderr())?;
            }
            write_csv(rows.into_iter().map(|m| m.row), out)?;
        }
        Benchmark::AlgorithmRun => {
            let algorithm = a.algorithm.unwrap_or(Algorithm::Bfs);
            run_algorithm(algorithm, &a.algo, c, out)?;
        }
    }
    Ok(())
}

fn run_algorithm(algorithm: Algorithm, flags: &AlgoFlags, c: &Common, out: Box<dyn Write>) -> Result<()> {
    let graph = flags.graph(c.seed, Some(algorithm))?;
    let cfg = AlgorithmConfig {
        algorithm,
        runtime: c.runtime()?,
        source: flags.source,
        s: flags.s,
        t: flags.t,
        damping: flags.damping,
        iterations: flags.iters,
        ..AlgorithmConfig::default()
    };
    let m = bench_algorithm(&graph, &cfg)?;
    eprintln!(
        "{} on {} vertices: result {}, makespan {:.0} ns, {} commits, {} aborts",
        algorithm,
        graph.num_vertices(),
        m.row.result,
        m.row.makespan_ns,
        m.row.commits,
        m.row.total_aborts
    );
    write_csv([m.row], out)?;
    Ok(())
}

fn print_fits(f: &aam::model::ModelFits, w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "atomics: A={:.4} B={:.4} r2={:.4}", f.atomics.slope, f.atomics.intercept, f.atomics.r2)?;
    writeln!(w, "htm:     A={:.4} B={:.4} r2={:.4}", f.htm.slope, f.htm.intercept, f.htm.r2)?;
    match f.crossing {
        Ok(n) => writeln!(w, "crossing: N*={n:.4}"),
        Err(why) => writeln!(w, "crossing: none ({why})"),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Bench(a) => run_bench(&a),
        Cmd::Run(a) => run_algorithm(a.algorithm, &a.algo, &a.common, a.common.sink()?),
        Cmd::Fit { csv } => {
            let f = File::open(&csv).with_context(|| format!("opening {}", csv.display()))?;
            let fits = fit_both(&read_samples(f)?)?;
            print_fits(&fits, &mut io::stdout().lock())?;
            Ok(())
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(b) = e.downcast_ref::<BenchError>() {
        return b.exit_code() as u8;
    }
    if let Some(AlgoError::Runtime(_)) = e.downcast_ref::<AlgoError>() {
        return 1;
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
