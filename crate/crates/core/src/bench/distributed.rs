use serde::Serialize;

use super::{BenchError, Measured, BUILD_ID};
use crate::net::{run_scenario, workload, DistConfig, Scenario};

#[derive(Debug, Clone, Serialize)]
pub struct DistributedRow {
    pub benchmark: String,
    pub build: &'static str,
    pub seed: u64,
    pub policy: &'static str,
    pub procs: usize,
    pub threads: usize,
    pub txns_per_proc: usize,
    pub local: usize,
    pub remote: usize,
    pub makespan_ns: f64,
    pub per_txn_ns: f64,
    pub acquire_attempts: u64,
    pub backoffs: u64,
    pub wall_ns: u64,
    pub commits: u64,
    pub total_aborts: u64,
    pub aborts_conflict: u64,
    pub aborts_capacity: u64,
    pub aborts_other: u64,
    pub serializations: u64,
}

/// Runs one ownership scenario and checks it against a replay of the
/// generated workload: every process committed all its transactions,
/// every vertex was marked once per transaction naming it, and no marker
/// is left held.
pub fn bench_distributed(cfg: &DistConfig, scenario: Scenario) -> Result<Measured<DistributedRow>, BenchError> {
    let report = run_scenario(cfg, scenario)?;
    let (x, a, b) = scenario.params();
    if let Some((p, &c)) = report.commits_per_proc.iter().enumerate().find(|&(_, &c)| c != x as u64) {
        return Err(BenchError::Validation(format!("process {p} committed {c} of {x} transactions")));
    }
    let mut expect = vec![0u64; report.marks.len()];
    for p in 0..cfg.procs {
        for t in workload(cfg, scenario, p) {
            for &v in t.local.iter().chain(&t.remote) {
                expect[v] += 1;
            }
        }
    }
    if let Some(v) = (0..expect.len()).find(|&v| expect[v] != report.marks[v]) {
        return Err(BenchError::Validation(format!(
            "vertex {v} marked {} times, replay gives {}",
            report.marks[v], expect[v]
        )));
    }
    if report.markers_left != 0 {
        return Err(BenchError::Validation(format!("{} ownership markers still held", report.markers_left)));
    }
    let s = report.stats;
    let row = DistributedRow {
        benchmark: format!("distributed-{scenario}"),
        build: BUILD_ID,
        seed: cfg.seed,
        policy: crate::txn::Mechanism::Htm(cfg.policy).name(),
        procs: cfg.procs,
        threads: cfg.threads,
        txns_per_proc: x,
        local: a,
        remote: b,
        makespan_ns: report.makespan_ns,
        per_txn_ns: report.makespan_ns / x as f64,
        acquire_attempts: report.acquire_attempts,
        backoffs: report.backoffs,
        wall_ns: report.wall.as_nanos() as u64,
        commits: s.commits,
        total_aborts: s.total_aborts,
        aborts_conflict: s.aborts_conflict,
        aborts_capacity: s.aborts_capacity,
        aborts_other: s.aborts_other,
        serializations: s.serializations,
    };
    Ok(Measured { row, stats: s, capacity: Some(cfg.policy.capacity_cells()) })
}
