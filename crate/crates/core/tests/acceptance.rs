//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

mod common;

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use aam::algorithms::{
    bfs, boman_coloring, boruvka_mst, oracle, pagerank, st_connectivity, Algorithm,
};
use aam::bench::{
    bench_algorithm, bench_coalesce_sweep, bench_coarsen_sweep, bench_distributed, bench_model_sweep,
    bench_single_vertex, coalesce_crossover, AlgorithmConfig, CoalesceConfig, CoarsenConfig, Measured,
    ModelSweepConfig, RemoteKind, SingleKind, SingleVertexConfig,
};
use aam::graph::{assign_distinct_weights, generate_erdos_renyi, generate_kronecker};
use aam::model::fit_both;
use aam::net::{DistConfig, Scenario};
use aam::runtime::{ExecMode, RuntimeConfig};
use aam::txn::step::{explore, run_random, AtomicScript, Expr, Program, ScriptOp, StepConfig, StepError};
use aam::txn::{AccOp, CapacityProfile, CellRef, CostModel, HeapBuilder, Mechanism, RetryPolicy, RunStats, Worker};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn thread_counts() -> Vec<usize> {
    let mut t = vec![1, 4, max_threads()];
    t.sort_unstable();
    t.dedup();
    t
}

/// Every `{M} × {C} × {T} × {N} × policy × seed` configuration.
fn sweep() -> Vec<RuntimeConfig> {
    let mut out = Vec::new();
    for seed in 1..=5u64 {
        for mechanism in Mechanism::all() {
            for procs in [1, 4] {
                for &threads in &thread_counts() {
                    for coarsen in [1, 2, 16, 128] {
                        for coalesce in [1, 16] {
                            out.push(RuntimeConfig { procs, threads, coarsen, coalesce, mechanism, seed, ..RuntimeConfig::default() });
                        }
                    }
                }
            }
        }
    }
    out
}

fn describe(c: &RuntimeConfig) -> String {
    format!("{} N={} T={} M={} C={} seed={}", c.mechanism.name(), c.procs, c.threads, c.coarsen, c.coalesce, c.seed)
}

fn oracle_sweep() -> Check {
    let configs = sweep();
    let mut runs = 0;
    for c in &configs {
        let g = kron(7, 8, c.seed);
        let w = weighted_er(128, 0.05, c.seed);
        let dist = ref_bfs(&g, 0);
        let r = bfs(&g, 0, c).map_err(|e| format!("bfs {}: {e}", describe(c)))?;
        ensure(r.distances == dist, || format!("bfs distances differ at {}", describe(c)))?;

        let pr = ref_pagerank(&w, 0.85, 3);
        let r = pagerank(&w, 0.85, 3, c).map_err(|e| format!("pr {}: {e}", describe(c)))?;
        let worst = r.ranks.iter().zip(&pr).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(worst < 1e-9, || format!("pagerank off by {worst:e} at {}", describe(c)))?;

        let r = boruvka_mst(&w, c).map_err(|e| format!("mst {}: {e}", describe(c)))?;
        let expect = ref_msf_weight(&w);
        ensure(r.total_weight == expect, || format!("mst weight {} vs {expect} at {}", r.total_weight, describe(c)))?;

        for (s, t) in [(0, 127), (5, 77)] {
            let r = st_connectivity(&g, s, t, c).map_err(|e| format!("st {}: {e}", describe(c)))?;
            ensure(r.connected == ref_connected(&g, s, t), || format!("st {s}-{t} wrong at {}", describe(c)))?;
        }
        runs += 5;
    }
    Ok(format!("{} configurations, {runs} runs", configs.len()))
}

fn coloring_validity() -> Check {
    let configs = sweep();
    let mut worst_ratio = 0.0f64;
    for c in &configs {
        for g in [kron(7, 8, c.seed), er(128, 0.05, c.seed)] {
            let r = boman_coloring(&g, c).map_err(|e| format!("color {}: {e}", describe(c)))?;
            let bad = monochromatic(&g, &r.colors);
            ensure(bad == 0, || format!("{bad} monochromatic edges at {}", describe(c)))?;
            ensure(r.num_colors <= g.max_degree() + 1, || format!("{} colors > max degree + 1 at {}", r.num_colors, describe(c)))?;
            worst_ratio = worst_ratio.max(r.num_colors as f64 / (g.max_degree() + 1) as f64);
        }
    }
    Ok(format!("{} configurations, at most {:.2} of the degree bound", configs.len(), worst_ratio))
}

fn random_program(rng: &mut ChaCha8Rng, cells: usize) -> Program {
    let c = |rng: &mut ChaCha8Rng| CellRef(rng.gen_range(0..cells));
    match rng.gen_range(0..8) {
        0 => Program::Atomic(AtomicScript::Cas { cell: c(rng), compare: rng.gen_range(0..2), new: rng.gen_range(1..3) }),
        1 => Program::Atomic(AtomicScript::Fao { cell: c(rng), arg: rng.gen_range(1..3), op: AccOp::Sum }),
        _ => {
            let mut ops = Vec::new();
            let mut reads = 0;
            for _ in 0..rng.gen_range(1..=3) {
                let k = rng.gen_range(0..3);
                let value = if reads == 0 { Expr::Const(k) } else if rng.gen_bool(0.5) { Expr::Reg(rng.gen_range(0..reads), k) } else { Expr::SumPlus(k) };
                match rng.gen_range(0..4) {
                    0 | 1 => {
                        ops.push(ScriptOp::Read(c(rng)));
                        reads += 1;
                    }
                    2 if reads > 0 => ops.push(ScriptOp::WriteIf { reg: rng.gen_range(0..reads), equals: k % 2, cell: c(rng), value }),
                    _ => ops.push(ScriptOp::Write(c(rng), value)),
                }
            }
            Program::Txn(ops)
        }
    }
}

fn serializability() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut workloads, mut sampled, mut terminals, mut aborts, mut overflows, mut serial) = (0, 0, 0, 0u64, 0u64, 0u64);
    for _ in 0..400 {
        let cells = rng.gen_range(1..=6);
        let k = rng.gen_range(1..=4);
        let programs: Vec<Program> = (0..k).map(|_| random_program(&mut rng, cells)).collect();
        let init: Vec<u64> = (0..cells).map(|_| rng.gen_range(0..3)).collect();
        let cfg = StepConfig { serialize_after: rng.gen_range(1..=3), capacity: rng.gen_range(1..=6), ..StepConfig::default() };
        // the explorer checks after every step that the heap equals the
        // committed state, so a dirty rollback is reported as an error
        let seq = sequential_terminals(&programs, &init);
        let ex = match explore(&programs, &init, cfg) {
            Ok(ex) => ex,
            Err(StepError::StateLimit(_)) => {
                // too many interleavings to enumerate: sample schedules instead
                for seed in 0..500 {
                    let run = run_random(&programs, &init, cfg, seed).map_err(|e| format!("{programs:?}: {e}"))?;
                    ensure(seq.contains(&run.terminal), || format!("{:?} is not serial for {programs:?}", run.terminal))?;
                    aborts += run.aborts;
                }
                sampled += 1;
                continue;
            }
            Err(e) => return Err(format!("{programs:?}: {e}")),
        };
        if let Some(t) = ex.terminals.iter().find(|t| !seq.contains(t)) {
            return Err(format!("{t:?} is not serial for {programs:?} from {init:?}"));
        }
        workloads += 1;
        terminals += ex.terminals.len();
        aborts += ex.abort_steps;
        overflows += ex.overflow_steps;
        serial += ex.serialized_commits;
    }
    ensure(aborts > 0 && overflows > 0 && serial > 0, || "some abort path was never explored".into())?;
    Ok(format!("{workloads} workloads explored, {sampled} sampled, {terminals} terminal states, {aborts} abort steps ({overflows} overflow), {serial} serialized commits"))
}

fn all_benchmarks() -> Result<Vec<(String, bool)>, String> {
    let mut checked = Vec::new();
    let mut push = |name: String, ok: bool| checked.push((name, ok));
    let e = |e: aam::bench::BenchError| e.to_string();

    for mech in Mechanism::all() {
        for kind in [SingleKind::Cas, SingleKind::Acc] {
            for threads in [1, 4] {
                let cfg = SingleVertexConfig { kind, threads, vertices: 64, mechanism: mech, ..SingleVertexConfig::default() };
                let m = bench_single_vertex(&cfg).map_err(e)?;
                push(format!("{} {} T={threads}", m.row.benchmark, mech.name()), m.accounting_ok());
            }
        }
    }
    let g = kron(9, 8, 1);
    for mech in ["rtm", "bgq-short"] {
        let cfg = CoarsenConfig {
            m_range: vec![1, 16, 128],
            reps: 1,
            runtime: RuntimeConfig { mechanism: mech.parse().unwrap(), threads: 2, ..RuntimeConfig::default() },
            ..CoarsenConfig::default()
        };
        for m in bench_coarsen_sweep(&g, &cfg).map_err(e)? {
            push(format!("coarsen {mech} M={}", m.row.coarsen), m.accounting_ok());
        }
    }
    for kind in [RemoteKind::Mark, RemoteKind::Increment] {
        let cfg = CoalesceConfig { kind, procs: 3, vertices_per_proc: 64, ops_per_proc: 500, c_range: vec![1, 16], ..CoalesceConfig::default() };
        for m in bench_coalesce_sweep(&cfg).map_err(e)? {
            push(format!("{} {} C={}", m.row.benchmark, m.row.policy, m.row.coalesce), m.accounting_ok());
        }
    }
    for sc in Scenario::ALL {
        let m = bench_distributed(&DistConfig { procs: 4, ..DistConfig::default() }, sc).map_err(e)?;
        push(m.row.benchmark.clone(), m.accounting_ok());
    }
    let w = assign_distinct_weights(er(256, 0.03, 2), 2);
    for algorithm in Algorithm::ALL {
        let cfg = AlgorithmConfig {
            algorithm,
            runtime: RuntimeConfig { procs: 4, threads: 2, coarsen: 16, coalesce: 16, ..RuntimeConfig::default() },
            t: 200,
            iterations: 3,
            ..AlgorithmConfig::default()
        };
        let m = bench_algorithm(&w, &cfg).map_err(e)?;
        push(format!("run {algorithm}"), m.accounting_ok());
    }

    // footprints 1..=80 against a 64-cell buffer: overflow must appear
    // exactly past 64
    let cfg = ModelSweepConfig {
        n_range: vec![1, 32, 63, 64, 65, 80],
        activities: 50,
        htm: Mechanism::Htm(RetryPolicy::bgq(CapacityProfile::Short)),
        ..ModelSweepConfig::default()
    };
    for m in bench_model_sweep(&cfg).map_err(e)? {
        let r = &m.row;
        let overflow_iff = if r.policy == "atomics" { r.aborts_capacity == 0 } else { (r.aborts_capacity > 0) == (r.n_vertices > 64) };
        push(format!("model {} N={}", r.policy, r.n_vertices), m.accounting_ok() && overflow_iff);
    }
    Ok(checked)
}

fn abort_accounting() -> Check {
    let runs = all_benchmarks()?;
    if let Some((name, _)) = runs.iter().find(|(_, ok)| !ok) {
        return Err(format!("accounting broken in {name}"));
    }
    Ok(format!("{} benchmark rows", runs.len()))
}

fn injected(policy: RetryPolicy, seed: u64) -> Result<(u32, bool), String> {
    let mut b = HeapBuilder::new();
    let r = b.alloc(1, 0);
    let heap = b.build();
    let stats = Arc::new(RunStats::new());
    let mut w = Worker::new(0, seed, CostModel::default(), stats.clone()).without_real_backoff();
    let out = w
        .execute(&heap, &policy.with_other_aborts(1.0), |ctx| {
            let x = ctx.read(r.at(0))?;
            ctx.write(r.at(0), x + 1)
        })
        .map_err(|e| e.to_string())?;
    let s = stats.snapshot();
    ensure(heap.load(r.at(0)) == 1, || "injected run applied its effect more than once".into())?;
    ensure(s.aborts_other == u64::from(out.aborts) && s.accounting_holds(), || format!("{s:?}"))?;
    Ok((out.aborts, out.serialized))
}

fn policy_semantics() -> Check {
    for seed in 0..20 {
        let (a, ser) = injected(RetryPolicy::hle(), seed)?;
        ensure(a == 1 && ser, || format!("hle: {a} aborts before serializing"))?;
        for cap in [CapacityProfile::Short, CapacityProfile::Long] {
            let (a, ser) = injected(RetryPolicy::bgq(cap), seed)?;
            ensure(a == 10 && ser, || format!("bgq: {a} rollbacks before serializing"))?;
        }
        let (a, ser) = injected(RetryPolicy::rtm(), seed)?;
        ensure(a <= RetryPolicy::RTM_MAX_RETRIES && ser, || format!("rtm: {a} aborts exceed the bound"))?;
        for policy in [RetryPolicy::rtm(), RetryPolicy::hle(), RetryPolicy::bgq(CapacityProfile::Short)] {
            let mut b = HeapBuilder::new();
            let r = b.alloc(1, 0);
            let heap = b.build();
            let mut w = Worker::new(0, seed, CostModel::default(), Arc::new(RunStats::new())).without_real_backoff();
            let out = w.execute(&heap, &policy.with_other_aborts(0.5), |ctx| ctx.write(r.at(0), 1)).map_err(|e| e.to_string())?;
            ensure(out.aborts <= policy.serialize_after(), || format!("{policy:?}: {} aborts", out.aborts))?;
        }
    }
    Ok("hle 1, bgq 10, rtm <= 8 under injected aborts".into())
}

fn ownership() -> Check {
    let mut txns = 0u64;
    let mut backoffs = 0u64;
    for sc in Scenario::ALL {
        for (seed, deterministic) in [(1, false), (2, false), (1, true)] {
            let cfg = DistConfig { procs: 4, seed, deterministic, ..DistConfig::default() };
            // replay equality, per-process commit counts and released markers
            // are checked inside the benchmark; double holds panic
            let m = bench_distributed(&cfg, sc).map_err(|e| format!("{sc} seed {seed}: {e}"))?;
            txns += m.row.commits;
            backoffs += m.row.backoffs;
        }
    }
    ensure(txns >= 10_000, || format!("only {txns} transactions"))?;
    Ok(format!("{txns} distributed transactions, {backoffs} backoffs, no watchdog"))
}

fn model_structure() -> Check {
    let mut out = Vec::new();
    for policy in ["rtm", "hle", "bgq-short", "bgq-long"] {
        let cfg = ModelSweepConfig { htm: policy.parse().unwrap(), activities: 1000, ..ModelSweepConfig::default() };
        let rows = bench_model_sweep(&cfg).map_err(|e| e.to_string())?;
        let samples: Vec<_> = rows.iter().map(|m: &Measured<_>| m.row.sample()).collect();
        let f = fit_both(&samples).map_err(|e| e.to_string())?;
        ensure(f.atomics.r2 > 0.95 && f.htm.r2 > 0.95, || format!("{policy}: r2 {} / {}", f.atomics.r2, f.htm.r2))?;
        ensure(f.htm.intercept > f.atomics.intercept, || format!("{policy}: B_HTM {} <= B_AT {}", f.htm.intercept, f.atomics.intercept))?;
        ensure(f.htm.slope < f.atomics.slope, || format!("{policy}: A_HTM {} >= A_AT {}", f.htm.slope, f.atomics.slope))?;
        let n = f.crossing.map_err(|why| format!("{policy}: {why}"))?;
        ensure(n.is_finite() && n > 0.0, || format!("{policy}: N* = {n}"))?;
        out.push(format!("{policy} N*={n:.2}"));
    }
    Ok(out.join(", "))
}

fn coarsening() -> Check {
    let g = kron(12, 16, 5);
    let mut out = Vec::new();
    for policy in ["rtm", "bgq-short"] {
        let cfg = CoarsenConfig {
            m_range: vec![1, 2, 4, 8, 16],
            reps: 3,
            runtime: RuntimeConfig { threads: 1, mechanism: policy.parse().unwrap(), ..RuntimeConfig::default() },
            ..CoarsenConfig::default()
        };
        let rows = bench_coarsen_sweep(&g, &cfg).map_err(|e| e.to_string())?;
        let per: Vec<f64> = rows.iter().map(|m| m.row.per_vertex_ns).collect();
        ensure(per.windows(2).all(|w| w[1] < w[0]), || format!("{policy}: per-vertex time not decreasing: {per:?}"))?;
        out.push(format!("{policy} {:.1} -> {:.1} ns/vertex", per[0], per[4]));
    }
    Ok(out.join(", "))
}

fn coalescing() -> Check {
    let mut out = Vec::new();
    for kind in [RemoteKind::Mark, RemoteKind::Increment] {
        let cfg = CoalesceConfig { kind, c_range: vec![1, 2, 4, 8, 16, 32, 64], ..CoalesceConfig::default() };
        let rows: Vec<_> = bench_coalesce_sweep(&cfg).map_err(|e| e.to_string())?.into_iter().map(|m| m.row).collect();
        let c = coalesce_crossover(&rows).ok_or_else(|| format!("{kind}: no crossover"))?;
        out.push(format!("{kind} C_cross={c}"));
    }
    Ok(out.join(", "))
}

fn determinism() -> Check {
    let twice = |what: &str, same: bool| ensure(same, || format!("{what} differs between runs"));
    for seed in [1u64, 7, 99] {
        twice("kronecker", generate_kronecker(10, 8, seed) == generate_kronecker(10, 8, seed))?;
        twice("erdos-renyi", generate_erdos_renyi(500, 0.02, seed) == generate_erdos_renyi(500, 0.02, seed))?;
        let w = |s| assign_distinct_weights(er(300, 0.02, s), s);
        twice("weights", w(seed).weights() == w(seed).weights())?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let cells = rng.gen_range(1..=4);
        let programs: Vec<Program> = (0..3).map(|_| random_program(&mut rng, cells)).collect();
        let init = vec![0; cells];
        let cfg = StepConfig::default();
        twice("exploration", explore(&programs, &init, cfg) == explore(&programs, &init, cfg))?;
        for s in 0..3 {
            twice("random schedule", run_random(&programs, &init, cfg, s) == run_random(&programs, &init, cfg, s))?;
        }
    }

    let g = kron(9, 8, 3);
    let w = assign_distinct_weights(er(256, 0.03, 3), 3);
    twice("bfs oracle", oracle::bfs_distances(&g, 0) == oracle::bfs_distances(&g, 0) && ref_bfs(&g, 0) == ref_bfs(&g, 0))?;
    let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
    twice("pagerank oracle", bits(oracle::pagerank(&w, 0.85, 5)) == bits(oracle::pagerank(&w, 0.85, 5)))?;
    twice("pagerank reference", bits(ref_pagerank(&w, 0.85, 5)) == bits(ref_pagerank(&w, 0.85, 5)))?;
    twice("kruskal", oracle::kruskal(&w) == oracle::kruskal(&w) && ref_msf_weight(&w).to_bits() == ref_msf_weight(&w).to_bits())?;
    twice("connectivity", (0..50).all(|t| oracle::connected(&g, 0, t) == oracle::connected(&g, 0, t)))?;

    for mechanism in Mechanism::all() {
        let c = RuntimeConfig { procs: 4, threads: 2, coarsen: 4, coalesce: 4, mechanism, seed: 11, mode: ExecMode::Deterministic, ..RuntimeConfig::default() };
        let run = || -> Result<_, String> {
            let e = |e: aam::algorithms::AlgoError| e.to_string();
            let b = bfs(&g, 0, &c).map_err(e)?;
            let p = pagerank(&w, 0.85, 3, &c).map_err(e)?;
            let m = boruvka_mst(&w, &c).map_err(e)?;
            let s = st_connectivity(&g, 0, 300, &c).map_err(e)?;
            let k = boman_coloring(&g, &c).map_err(e)?;
            Ok((
                b.distances,
                b.report.stats,
                b.report.makespan_ns.to_bits(),
                bits(p.ranks),
                m.edges.len(),
                m.report.stats,
                s.connected,
                k.colors,
                k.report.stats,
            ))
        };
        twice(&format!("deterministic runtime ({})", mechanism.name()), run()? == run()?)?;
    }
    let d = DistConfig { procs: 4, deterministic: true, seed: 4, ..DistConfig::default() };
    let a = aam::net::run_scenario(&d, Scenario::O3).map_err(|e| e.to_string())?;
    let b = aam::net::run_scenario(&d, Scenario::O3).map_err(|e| e.to_string())?;
    twice("deterministic scenario", a.marks == b.marks && a.stats == b.stats && a.backoffs == b.backoffs && a.makespan_ns == b.makespan_ns)?;
    Ok("generators, step scheduler, oracles, deterministic runtime and scenarios".into())
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("oracle equivalence sweep", oracle_sweep),
        ("coloring validity", coloring_validity),
        ("transaction serializability", serializability),
        ("abort accounting", abort_accounting),
        ("policy semantics", policy_semantics),
        ("ownership safety and liveness", ownership),
        ("performance model structure", model_structure),
        ("coarsening amortization", coarsening),
        ("coalescing crossover", coalescing),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout().lock();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = check();
        let secs = start.elapsed().as_secs_f64();
        // written past the test harness capture so the lines always show
        let line = match &res {
            Ok(detail) => format!("PASS criterion {:>2} {name}: {detail} ({secs:.1}s)", i + 1),
            Err(why) => format!("FAIL criterion {:>2} {name}: {why} ({secs:.1}s)", i + 1),
        };
        writeln!(out, "{line}").unwrap();
        out.flush().unwrap();
        if res.is_err() {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
