//! Distributed transactions over the ownership protocol: each process issues
//! `x` transactions, each marking `a` local and `b` remote vertices chosen at
//! random.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::ownership::{ownership_backoff, Acquire, OwnershipError, OwnershipTable};
use crate::graph::{Partition, ProcessId, VertexId};
use crate::txn::{CellRef, CostModel, Heap, HeapBuilder, Outcome, Region, RetryPolicy, RunStats, StatsSnapshot, TxnError, Worker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Scenario {
    O1,
    O2,
    O3,
    O4,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::O1, Scenario::O2, Scenario::O3, Scenario::O4];

    /// `(x, a, b)`: transactions per process, local and remote vertices per
    /// transaction.
    pub fn params(self) -> (usize, usize, usize) {
        match self {
            Scenario::O1 => (1_000, 5, 1),
            Scenario::O2 => (10_000, 5, 1),
            Scenario::O3 => (1_000, 7, 3),
            Scenario::O4 => (10_000, 7, 3),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::O1 => "o1",
            Scenario::O2 => "o2",
            Scenario::O3 => "o3",
            Scenario::O4 => "o4",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name().eq_ignore_ascii_case(s) || sc.name().replace('o', "o-").eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown scenario '{s}' (expected o1, o2, o3 or o4)"))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DistConfig {
    pub procs: usize,
    pub vertices_per_proc: usize,
    /// Workers per process.
    pub threads: usize,
    pub policy: RetryPolicy,
    pub seed: u64,
    /// Single-threaded discrete-event execution ordered by virtual clocks.
    pub deterministic: bool,
    pub cost: CostModel,
    pub backoff_base: Duration,
    pub backoff_cap: Duration,
    pub watchdog: Duration,
}

impl Default for DistConfig {
    fn default() -> Self {
        DistConfig {
            procs: 4,
            vertices_per_proc: 1024,
            threads: 1,
            policy: RetryPolicy::rtm(),
            seed: 1,
            deterministic: false,
            cost: CostModel::default(),
            backoff_base: Duration::from_micros(10),
            backoff_cap: Duration::from_millis(10),
            watchdog: Duration::from_secs(120),
        }
    }
}

#[derive(Debug, Error)]
pub enum DistError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("process {pid} made no progress within {budget:?}")]
    Watchdog { pid: ProcessId, budget: Duration },
    #[error(transparent)]
    Ownership(#[from] OwnershipError),
    #[error(transparent)]
    Txn(#[from] TxnError),
}

/// Vertices one transaction marks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistTxn {
    pub local: Vec<VertexId>,
    pub remote: Vec<VertexId>,
}

impl DistTxn {
    fn elements(&self) -> Vec<VertexId> {
        let mut e: Vec<VertexId> = self.local.iter().chain(&self.remote).copied().collect();
        e.sort_unstable();
        e
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DistReport {
    pub scenario: Scenario,
    pub procs: usize,
    pub commits_per_proc: Vec<u64>,
    pub backoffs: u64,
    pub acquire_attempts: u64,
    pub stats: StatsSnapshot,
    /// Final mark count per vertex.
    pub marks: Vec<u64>,
    /// Markers still held after the run; zero on success.
    pub markers_left: usize,
    pub makespan_ns: f64,
    pub wall: Duration,
}

/// The transactions process `pid` issues, derived only from the seed.
pub fn workload(cfg: &DistConfig, scenario: Scenario, pid: ProcessId) -> Vec<DistTxn> {
    let (x, a, b) = scenario.params();
    let part = Partition::new(cfg.procs * cfg.vertices_per_proc, cfg.procs);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((pid as u64 + 1) << 32) ^ 0x5ce0_a710);
    let own = part.range(pid);
    let foreign = part.num_vertices() - own.len();
    (0..x)
        .map(|_| {
            let local = sample(&mut rng, own.len(), a).into_iter().map(|i| own.start + i).collect();
            let remote = sample(&mut rng, foreign, b)
                .into_iter()
                .map(|i| if i < own.start { i } else { i + own.len() })
                .collect();
            DistTxn { local, remote }
        })
        .collect()
}

struct Node {
    heap: Heap,
    table: OwnershipTable,
    marks: Region,
    caches: Region,
    slots: usize,
}

impl Node {
    fn new(cfg: &DistConfig, b: usize) -> Node {
        let n = cfg.procs * cfg.vertices_per_proc;
        let mut hb = HeapBuilder::new();
        let table = OwnershipTable::new(&mut hb, n);
        let marks = hb.alloc(n, 0);
        let caches = hb.alloc(cfg.procs * cfg.threads * b.max(1), 0);
        Node { heap: hb.build(), table, marks, caches, slots: b.max(1) }
    }

    fn cache(&self, agent: usize, i: usize) -> CellRef {
        self.caches.at(agent * self.slots + i)
    }

    fn relocate(&self, agent: usize, t: &DistTxn) {
        for (i, &r) in t.remote.iter().enumerate() {
            self.heap.store(self.cache(agent, i), self.heap.load(self.marks.at(r)));
        }
    }

    fn execute(&self, worker: &mut Worker, policy: &RetryPolicy, pid: ProcessId, agent: usize, t: &DistTxn) -> Result<Outcome<()>, TxnError> {
        worker.charge(worker.cost().plain_read * t.remote.len() as f64);
        worker.execute(&self.heap, policy, |ctx| {
            for &v in &t.local {
                self.table.check_access(ctx, pid, v)?;
                let m = ctx.read(self.marks.at(v))?;
                ctx.write(self.marks.at(v), m + 1)?;
            }
            for i in 0..t.remote.len() {
                let c = self.cache(agent, i);
                let m = ctx.read(c)?;
                ctx.write(c, m + 1)?;
            }
            Ok(())
        })
    }

    fn release(&self, pid: ProcessId, agent: usize, t: &DistTxn, elems: &[VertexId]) -> Result<(), OwnershipError> {
        let writeback: Vec<(CellRef, CellRef)> =
            t.remote.iter().enumerate().map(|(i, &r)| (self.marks.at(r), self.cache(agent, i))).collect();
        self.table.release(&self.heap, pid, elems, &writeback)
    }
}

fn sleep_for(d: Duration) {
    if d >= Duration::from_micros(100) {
        std::thread::sleep(d);
    } else {
        let until = Instant::now() + d;
        while Instant::now() < until {
            std::hint::spin_loop();
        }
    }
}

#[derive(Default)]
struct AgentTally {
    commits: u64,
    backoffs: u64,
    attempts: u64,
}

/// Runs one transaction to commit: acquire every element, execute, release.
fn run_distributed_txn(
    node: &Node,
    cfg: &DistConfig,
    worker: &mut Worker,
    pid: ProcessId,
    agent: usize,
    t: &DistTxn,
    tally: &mut AgentTally,
) -> Result<(), DistError> {
    let elems = t.elements();
    let started = Instant::now();
    let mut failures = 0;
    loop {
        tally.attempts += 1;
        worker.charge(worker.cost().atomic_op * elems.len() as f64);
        match node.table.acquire(&node.heap, pid, &elems) {
            Acquire::Acquired => break,
            Acquire::Backoff { .. } => {
                tally.backoffs += 1;
                failures += 1;
                let d = ownership_backoff(failures, cfg.backoff_base, cfg.backoff_cap, worker.rng());
                worker.charge(d.as_nanos() as f64);
                sleep_for(d);
                if started.elapsed() > cfg.watchdog {
                    return Err(DistError::Watchdog { pid, budget: cfg.watchdog });
                }
            }
        }
    }
    node.relocate(agent, t);
    node.execute(worker, &cfg.policy, pid, agent, t)?;
    worker.charge(worker.cost().atomic_op * elems.len() as f64);
    node.release(pid, agent, t, &elems)?;
    tally.commits += 1;
    Ok(())
}

fn validate(cfg: &DistConfig, scenario: Scenario) -> Result<(), DistError> {
    let (_, a, b) = scenario.params();
    if cfg.procs < 2 && b > 0 {
        return Err(DistError::Config("remote vertices need at least two processes".into()));
    }
    if cfg.threads == 0 {
        return Err(DistError::Config("threads must be positive".into()));
    }
    if cfg.vertices_per_proc < a || (cfg.procs - 1) * cfg.vertices_per_proc < b {
        return Err(DistError::Config(format!("{} vertices per process cannot supply a={a}, b={b}", cfg.vertices_per_proc)));
    }
    Ok(())
}

/// Runs `scenario` on `cfg.procs` simulated processes and reports the final
/// mark counts for comparison against a sequential replay.
pub fn run_scenario(cfg: &DistConfig, scenario: Scenario) -> Result<DistReport, DistError> {
    validate(cfg, scenario)?;
    let (_, _, b) = scenario.params();
    let node = Node::new(cfg, b);
    let stats = std::sync::Arc::new(RunStats::new());
    let agents = cfg.procs * cfg.threads;
    let mut workers: Vec<Worker> = (0..agents)
        .map(|i| {
            let w = Worker::new(i, cfg.seed, cfg.cost, stats.clone());
            if cfg.deterministic {
                w.without_real_backoff()
            } else {
                w
            }
        })
        .collect();
    // agent i belongs to process i / threads and takes a contiguous share
    let shares: Vec<Vec<DistTxn>> = (0..cfg.procs)
        .flat_map(|p| {
            let all = workload(cfg, scenario, p);
            let per = all.len().div_ceil(cfg.threads);
            let mut chunks: Vec<Vec<DistTxn>> = all.chunks(per.max(1)).map(<[DistTxn]>::to_vec).collect();
            chunks.resize(cfg.threads, Vec::new());
            chunks
        })
        .collect();

    let wall = Instant::now();
    let tallies = if cfg.deterministic {
        run_discrete(&node, cfg, &mut workers, &shares)?
    } else {
        run_threaded(&node, cfg, &mut workers, &shares)?
    };
    let wall = wall.elapsed();

    let mut commits_per_proc = vec![0; cfg.procs];
    for (i, t) in tallies.iter().enumerate() {
        commits_per_proc[i / cfg.threads] += t.commits;
    }
    Ok(DistReport {
        scenario,
        procs: cfg.procs,
        commits_per_proc,
        backoffs: tallies.iter().map(|t| t.backoffs).sum(),
        acquire_attempts: tallies.iter().map(|t| t.attempts).sum(),
        stats: stats.snapshot(),
        marks: node.marks.cells().map(|c| node.heap.load(c)).collect(),
        markers_left: node.table.held_count(),
        makespan_ns: workers.iter().map(Worker::clock).fold(0.0, f64::max),
        wall,
    })
}

fn run_threaded(node: &Node, cfg: &DistConfig, workers: &mut [Worker], shares: &[Vec<DistTxn>]) -> Result<Vec<AgentTally>, DistError> {
    std::thread::scope(|s| {
        let handles: Vec<_> = workers
            .iter_mut()
            .zip(shares)
            .enumerate()
            .map(|(agent, (worker, txns))| {
                s.spawn(move || {
                    let pid = agent / cfg.threads;
                    let mut tally = AgentTally::default();
                    for t in txns {
                        run_distributed_txn(node, cfg, worker, pid, agent, t, &mut tally)?;
                    }
                    Ok(tally)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("agent thread panicked")).collect()
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Acquire(usize),
    Execute,
    Release,
    Done,
}

/// Discrete-event execution: the agent with the smallest virtual clock takes
/// the next step; ties go to a seeded coin. A step is one marker CAS, one
/// transaction, or one release.
fn run_discrete(node: &Node, cfg: &DistConfig, workers: &mut [Worker], shares: &[Vec<DistTxn>]) -> Result<Vec<AgentTally>, DistError> {
    let n = workers.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd15c_7e7e);
    let mut tallies: Vec<AgentTally> = (0..n).map(|_| AgentTally::default()).collect();
    let mut next_txn = vec![0usize; n];
    let mut failures = vec![0u32; n];
    let mut phase: Vec<Phase> = shares.iter().map(|s| if s.is_empty() { Phase::Done } else { Phase::Acquire(0) }).collect();
    let total: usize = shares.iter().map(Vec::len).sum();
    let step_budget = 1_000_000u64.max(total as u64 * 10_000);
    let mut steps = 0u64;
    let mut elems: Vec<Vec<VertexId>> = shares.iter().map(|s| s.first().map(DistTxn::elements).unwrap_or_default()).collect();

    loop {
        let live: Vec<usize> = (0..n).filter(|&i| phase[i] != Phase::Done).collect();
        if live.is_empty() {
            break;
        }
        let min = live.iter().map(|&i| workers[i].clock()).fold(f64::INFINITY, f64::min);
        let ties: Vec<usize> = live.into_iter().filter(|&i| workers[i].clock() == min).collect();
        let i = ties[rng.gen_range(0..ties.len())];
        steps += 1;
        if steps > step_budget {
            return Err(DistError::Watchdog { pid: i / cfg.threads, budget: cfg.watchdog });
        }
        let pid = i / cfg.threads;
        let t = &shares[i][next_txn[i]];
        let w = &mut workers[i];
        match phase[i] {
            Phase::Acquire(k) => {
                w.charge(w.cost().atomic_op);
                if k == 0 {
                    tallies[i].attempts += 1;
                }
                if node.table.try_mark(&node.heap, pid, elems[i][k]) {
                    phase[i] = if k + 1 == elems[i].len() { Phase::Execute } else { Phase::Acquire(k + 1) };
                } else {
                    node.table.release_partial(&node.heap, pid, &elems[i][..k]);
                    w.charge(w.cost().atomic_op * k as f64);
                    tallies[i].backoffs += 1;
                    failures[i] += 1;
                    let d = ownership_backoff(failures[i], cfg.backoff_base, cfg.backoff_cap, w.rng());
                    w.charge(d.as_nanos() as f64);
                    phase[i] = Phase::Acquire(0);
                }
            }
            Phase::Execute => {
                node.relocate(i, t);
                node.execute(w, &cfg.policy, pid, i, t)?;
                phase[i] = Phase::Release;
            }
            Phase::Release => {
                w.charge(w.cost().atomic_op * elems[i].len() as f64);
                node.release(pid, i, t, &elems[i])?;
                tallies[i].commits += 1;
                failures[i] = 0;
                next_txn[i] += 1;
                match shares[i].get(next_txn[i]) {
                    Some(next) => {
                        elems[i] = next.elements();
                        phase[i] = Phase::Acquire(0);
                    }
                    None => phase[i] = Phase::Done,
                }
            }
            Phase::Done => unreachable!(),
        }
    }
    Ok(tallies)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workload_shape() {
        let cfg = DistConfig::default();
        let w = workload(&cfg, Scenario::O3, 1);
        assert_eq!(w.len(), 1000);
        let own = 1024..2048;
        for t in &w {
            assert_eq!(t.local.len(), 7);
            assert_eq!(t.remote.len(), 3);
            assert!(t.local.iter().all(|v| own.contains(v)));
            assert!(t.remote.iter().all(|v| !own.contains(v) && *v < 4096));
            let mut e = t.elements();
            e.dedup();
            assert_eq!(e.len(), 10);
        }
        assert_eq!(w, workload(&cfg, Scenario::O3, 1));
    }

    #[test]
    fn scenario_names() {
        assert_eq!("o2".parse::<Scenario>().unwrap(), Scenario::O2);
        assert_eq!("O-4".parse::<Scenario>().unwrap(), Scenario::O4);
        assert!("o5".parse::<Scenario>().is_err());
    }

    #[test]
    fn uncontended_single_txn() {
        let cfg = DistConfig { procs: 2, vertices_per_proc: 16, ..DistConfig::default() };
        let node = Node::new(&cfg, 1);
        let mut w = Worker::new(0, 1, cfg.cost, std::sync::Arc::new(RunStats::new()));
        let t = DistTxn { local: vec![0, 1, 2, 3, 4], remote: vec![20] };
        let mut tally = AgentTally::default();
        run_distributed_txn(&node, &cfg, &mut w, 0, 0, &t, &mut tally).unwrap();
        assert_eq!((tally.commits, tally.backoffs, tally.attempts), (1, 0, 1));
        assert_eq!(node.heap.load(node.marks.at(20)), 1);
        assert_eq!(node.table.held_count(), 0);
    }

    #[test]
    fn rejects_single_process_with_remote() {
        let cfg = DistConfig { procs: 1, ..DistConfig::default() };
        assert!(matches!(run_scenario(&cfg, Scenario::O1), Err(DistError::Config(_))));
    }
}
