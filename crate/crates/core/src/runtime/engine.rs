use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU64, Ordering::SeqCst};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    coarsen, Activity, AtomicMessage, FailureHandler, MessageClass, OpOutput, Operator, OperatorId, Reply,
    RuntimeError, SpawnCtx,
};
use crate::graph::{Partition, ProcessId, VertexId};
use crate::net::{NetStats, Network};
use crate::txn::{CostModel, Heap, Mechanism, RunStats, StatsSnapshot, TxnError, Worker};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    /// `procs × threads` OS threads.
    Threaded,
    /// One thread; the next worker to step is drawn from a seeded RNG.
    Deterministic,
}

/// Order of operators inside an activity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Fifo,
    /// FIFO batch, then sorted by element id.
    SortById,
}

#[derive(Debug, Clone)]
pub struct RuntimeConfig {
    pub procs: usize,
    pub threads: usize,
    /// Operators per activity (M).
    pub coarsen: usize,
    /// Messages per network batch (C).
    pub coalesce: usize,
    pub mechanism: Mechanism,
    pub seed: u64,
    pub cost: CostModel,
    pub net_latency: Duration,
    pub mode: ExecMode,
    pub selection: Selection,
    /// Maximum wall time without any completed operator.
    pub watchdog: Duration,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            procs: 1,
            threads: 1,
            coarsen: 1,
            coalesce: 1,
            mechanism: Mechanism::Htm(crate::txn::RetryPolicy::rtm()),
            seed: 1,
            cost: CostModel::default(),
            net_latency: Duration::ZERO,
            mode: ExecMode::Threaded,
            selection: Selection::Fifo,
            watchdog: Duration::from_secs(60),
        }
    }
}

impl RuntimeConfig {
    pub fn validate(&self) -> Result<(), RuntimeError> {
        if self.procs == 0 || self.threads == 0 || self.coarsen == 0 || self.coalesce == 0 {
            return Err(RuntimeError::Config("procs, threads, coarsen and coalesce must be positive".into()));
        }
        Ok(())
    }
}

/// Summary of one `run_to_quiescence` call.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunReport {
    pub stats: StatsSnapshot,
    /// Largest virtual time any worker spent in this run.
    pub makespan_ns: f64,
    #[serde(skip)]
    pub wall: Duration,
    /// Messages spawned since the previous run, including those seeded
    /// between runs.
    pub spawned: u64,
    /// Operators applied or skipped.
    pub executed: u64,
    pub replies: u64,
    pub activities: u64,
    pub net: NetStats,
    pub cancelled: bool,
}

impl RunReport {
    /// Folds a later run into this one; makespans add up, as consecutive
    /// rounds do.
    pub fn absorb(&mut self, other: &RunReport) {
        let s = &mut self.stats;
        let o = &other.stats;
        s.commits += o.commits;
        s.aborts_conflict += o.aborts_conflict;
        s.aborts_capacity += o.aborts_capacity;
        s.aborts_other += o.aborts_other;
        s.total_aborts += o.total_aborts;
        s.serializations += o.serializations;
        s.operator_failures += o.operator_failures;
        s.atomic_ops += o.atomic_ops;
        s.max_committed_footprint = s.max_committed_footprint.max(o.max_committed_footprint);
        s.min_overflow_footprint = match (s.min_overflow_footprint, o.min_overflow_footprint) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        s.overflow_below_capacity += o.overflow_below_capacity;
        self.makespan_ns += other.makespan_ns;
        self.wall += other.wall;
        self.spawned += other.spawned;
        self.executed += other.executed;
        self.replies += other.replies;
        self.activities += other.activities;
        self.net.batches += other.net.batches;
        self.net.messages += other.net.messages;
        self.cancelled |= other.cancelled;
    }
}

struct Proc {
    queue: Mutex<VecDeque<AtomicMessage>>,
    replies: Mutex<VecDeque<Reply>>,
}

/// A simulated machine of `procs` processes sharing one transactional heap.
/// Operators and handlers may borrow data living for `'g`.
pub struct Runtime<'g> {
    cfg: RuntimeConfig,
    partition: Partition,
    heap: Heap,
    operators: Vec<Box<dyn Operator + 'g>>,
    classes: Vec<MessageClass>,
    handlers: Vec<Option<Box<dyn FailureHandler + 'g>>>,
    started: bool,
    procs: Vec<Proc>,
    net: Network<AtomicMessage>,
    pending: AtomicI64,
    spawned: AtomicU64,
    executed: AtomicU64,
    replies: AtomicU64,
    activities: AtomicU64,
    cancel: AtomicBool,
    halt: AtomicBool,
    error: Mutex<Option<RuntimeError>>,
    stats: Arc<RunStats>,
    workers: Vec<Worker>,
    runs: u64,
    /// spawned, executed, replies, activities at the end of the last run
    marks: [u64; 4],
    net_mark: NetStats,
    /// Network cost of messages seeded between runs, per process; billed
    /// to the process's first worker when the next run starts.
    driver_charge: Mutex<Vec<f64>>,
}

impl<'g> Runtime<'g> {
    pub fn new(cfg: RuntimeConfig, partition: Partition, heap: Heap) -> Result<Self, RuntimeError> {
        cfg.validate()?;
        if partition.num_procs() != cfg.procs {
            return Err(RuntimeError::Config(format!(
                "partition has {} processes, configuration {}",
                partition.num_procs(),
                cfg.procs
            )));
        }
        let stats = Arc::new(RunStats::new());
        let deterministic = cfg.mode == ExecMode::Deterministic;
        let workers = (0..cfg.procs * cfg.threads)
            .map(|i| {
                let w = Worker::new(i, cfg.seed, cfg.cost, stats.clone());
                if deterministic {
                    w.without_real_backoff()
                } else {
                    w
                }
            })
            .collect();
        Ok(Runtime {
            procs: (0..cfg.procs)
                .map(|_| Proc { queue: Mutex::new(VecDeque::new()), replies: Mutex::new(VecDeque::new()) })
                .collect(),
            net: Network::new(cfg.procs, cfg.coalesce, cfg.net_latency),
            cfg,
            partition,
            heap,
            operators: Vec::new(),
            classes: Vec::new(),
            handlers: Vec::new(),
            started: false,
            pending: AtomicI64::new(0),
            spawned: AtomicU64::new(0),
            executed: AtomicU64::new(0),
            replies: AtomicU64::new(0),
            activities: AtomicU64::new(0),
            cancel: AtomicBool::new(false),
            halt: AtomicBool::new(false),
            error: Mutex::new(None),
            stats,
            workers,
            runs: 0,
            marks: [0; 4],
            net_mark: NetStats::default(),
            driver_charge: Mutex::new(vec![0.0; partition.num_procs()]),
        })
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.cfg
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn heap(&self) -> &Heap {
        &self.heap
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    pub fn register_operator(&mut self, op: Box<dyn Operator + 'g>) -> Result<OperatorId, RuntimeError> {
        if self.started {
            return Err(RuntimeError::RegistrationClosed);
        }
        self.classes.push(op.class());
        self.operators.push(op);
        self.handlers.push(None);
        Ok(self.operators.len() - 1)
    }

    /// Installs the handler that receives replies of `op`.
    pub fn register_handler(&mut self, op: OperatorId, handler: Box<dyn FailureHandler + 'g>) -> Result<(), RuntimeError> {
        if self.started {
            return Err(RuntimeError::RegistrationClosed);
        }
        let slot = self.handlers.get_mut(op).ok_or(RuntimeError::UnknownOperator(op))?;
        *slot = Some(handler);
        Ok(())
    }

    /// Id the next registered operator will get.
    pub fn next_operator_id(&self) -> OperatorId {
        self.operators.len()
    }

    pub fn class_of(&self, op: OperatorId) -> Result<MessageClass, RuntimeError> {
        self.classes.get(op).copied().ok_or(RuntimeError::UnknownOperator(op))
    }

    /// Builds the message `src` would send for `op` on `element`.
    pub fn message(&self, src: ProcessId, op: OperatorId, element: VertexId, param: u64) -> Result<AtomicMessage, RuntimeError> {
        let class = self.class_of(op)?;
        let target = self.partition.owner(element).map_err(|_| RuntimeError::OutOfRange(element))?;
        Ok(AtomicMessage { class, target, operator: op, element, param, reply_to: class.returns().then_some(src) })
    }

    fn validate_message(&self, msg: &AtomicMessage) -> Result<(), RuntimeError> {
        let expected = self.class_of(msg.operator)?;
        if expected != msg.class {
            return Err(RuntimeError::ClassMismatch { expected, got: msg.class });
        }
        let owner = self.partition.owner(msg.element).map_err(|_| RuntimeError::OutOfRange(msg.element))?;
        if owner != msg.target {
            return Err(RuntimeError::OwnerMismatch { element: msg.element, target: msg.target, owner });
        }
        match (msg.class.returns(), msg.reply_to) {
            (true, None) => Err(RuntimeError::MissingReplyTo),
            (false, Some(_)) => Err(RuntimeError::UnexpectedReplyTo),
            (true, Some(p)) if p >= self.cfg.procs => Err(RuntimeError::Config(format!("reply_to {p} is not a process"))),
            _ => Ok(()),
        }
    }

    /// Issues `msg` from `src`: local targets go to the coarsening queue,
    /// remote ones into the network.
    pub fn spawn(&self, src: ProcessId, msg: AtomicMessage) -> Result<(), RuntimeError> {
        if src >= self.cfg.procs {
            return Err(RuntimeError::Config(format!("process {src} does not exist")));
        }
        self.validate_message(&msg)?;
        self.route(src, None, vec![msg]);
        Ok(())
    }

    /// Shorthand for [`Runtime::message`] followed by [`Runtime::spawn`].
    pub fn send(&self, src: ProcessId, op: OperatorId, element: VertexId, param: u64) -> Result<(), RuntimeError> {
        self.spawn(src, self.message(src, op, element, param)?)
    }

    pub fn queued(&self, p: ProcessId) -> Vec<AtomicMessage> {
        self.procs[p].queue.lock().iter().copied().collect()
    }

    /// Moves every deliverable batch addressed to `p` into its queue.
    pub fn deliver(&self, p: ProcessId) -> usize {
        let mut n = 0;
        while let Some(b) = self.net.recv(p) {
            n += b.messages.len();
            self.procs[p].queue.lock().extend(b.messages);
        }
        n
    }

    pub fn flush_all(&self, src: ProcessId) -> Vec<usize> {
        let sizes = self.net.flush_all(src);
        let ns: f64 = sizes.iter().map(|&k| self.cfg.cost.batch(k)).sum();
        self.driver_charge.lock()[src] += ns;
        sizes
    }

    pub fn net_stats(&self) -> NetStats {
        self.net.stats()
    }

    fn route(&self, src: ProcessId, mut worker: Option<&mut Worker>, msgs: Vec<AtomicMessage>) {
        self.pending.fetch_add(msgs.len() as i64, SeqCst);
        self.spawned.fetch_add(msgs.len() as u64, SeqCst);
        for m in msgs {
            if m.target == src {
                self.procs[src].queue.lock().push_back(m);
            } else if let Some(k) = self.net.send(src, m.target, m) {
                let ns = self.cfg.cost.batch(k);
                match worker.as_deref_mut() {
                    Some(w) => w.charge(ns),
                    None => self.driver_charge.lock()[src] += ns,
                }
            }
        }
    }

    fn has_work(&self, p: ProcessId) -> bool {
        !self.procs[p].queue.lock().is_empty()
            || !self.procs[p].replies.lock().is_empty()
            || self.net.has_mail(p)
            || self.net.has_buffered(p)
    }

    fn spawn_ctx(&self, pid: ProcessId) -> SpawnCtx<'_> {
        SpawnCtx {
            pid,
            heap: &self.heap,
            classes: &self.classes,
            partition: &self.partition,
            out: Vec::new(),
            error: None,
            cancel: false,
        }
    }

    fn finish_ctx(&self, pid: ProcessId, worker: &mut Worker, sc: SpawnCtx<'_>) -> Result<(), RuntimeError> {
        if sc.cancel {
            self.cancel.store(true, SeqCst);
        }
        let SpawnCtx { out, error, .. } = sc;
        self.route(pid, Some(worker), out);
        error.map_or(Ok(()), Err)
    }

    /// One unit of work for worker `w` of process `p`. Returns whether
    /// anything was done.
    fn step(&self, p: ProcessId, w: &mut Worker) -> Result<bool, RuntimeError> {
        if let Some(batch) = self.net.recv(p) {
            self.procs[p].queue.lock().extend(batch.messages);
            return Ok(true);
        }
        let reply = self.procs[p].replies.lock().pop_front();
        if let Some(r) = reply {
            self.handle_reply(p, w, r)?;
            return Ok(true);
        }
        let act = {
            let mut q = self.procs[p].queue.lock();
            (!q.is_empty()).then(|| coarsen(&mut q, self.cfg.coarsen))
        };
        if let Some(mut act) = act {
            if self.cfg.selection == Selection::SortById {
                act.operators.sort_by_key(|m| m.element);
            }
            self.execute_activity(p, w, act)?;
            return Ok(true);
        }
        let sizes = self.net.flush_all(p);
        for &k in &sizes {
            w.charge(self.cfg.cost.batch(k));
        }
        Ok(!sizes.is_empty())
    }

    fn handle_reply(&self, p: ProcessId, w: &mut Worker, r: Reply) -> Result<(), RuntimeError> {
        let handler = self
            .handlers
            .get(r.operator)
            .and_then(|h| h.as_deref())
            .ok_or(RuntimeError::MissingHandler(r.operator))?;
        let mut sc = self.spawn_ctx(p);
        handler.handle(&mut sc, &r);
        self.finish_ctx(p, w, sc)?;
        self.replies.fetch_add(1, SeqCst);
        self.pending.fetch_sub(1, SeqCst);
        Ok(())
    }

    fn execute_activity(&self, p: ProcessId, w: &mut Worker, act: Activity) -> Result<(), RuntimeError> {
        let mut kept = Vec::with_capacity(act.len());
        let mut skipped = 0;
        for m in act.operators {
            debug_assert_eq!(m.target, p);
            let op = self.operators.get(m.operator).ok_or(RuntimeError::UnknownOperator(m.operator))?;
            w.charge(self.cfg.cost.plain_read);
            if !m.class.returns() && op.skip(&self.heap, m.element, m.param) {
                skipped += 1;
            } else {
                kept.push(m);
            }
        }
        let outs = if kept.is_empty() { Vec::new() } else { self.run_operators(w, &kept)? };
        self.activities.fetch_add(1, SeqCst);

        let mut sc = self.spawn_ctx(p);
        let mut failures = 0;
        let mut resolved = skipped;
        let mut err = None;
        for (m, out) in kept.iter().zip(&outs) {
            if out.failed {
                if !m.class.may_fail() {
                    err.get_or_insert(RuntimeError::FailedAlwaysSucceed(m.operator));
                }
                failures += 1;
            }
            self.operators[m.operator].committed(&mut sc, m.element, m.param, out);
            match m.reply_to {
                Some(spawner) => self.procs[spawner].replies.lock().push_back(Reply {
                    operator: m.operator,
                    element: m.element,
                    param: m.param,
                    output: *out,
                }),
                None => resolved += 1,
            }
        }
        if failures > 0 {
            self.stats.record_operator_failures(failures);
        }
        self.finish_ctx(p, w, sc)?;
        self.executed.fetch_add((kept.len() + skipped) as u64, SeqCst);
        self.pending.fetch_sub(resolved as i64, SeqCst);
        err.map_or(Ok(()), Err)
    }

    fn run_operators(&self, w: &mut Worker, kept: &[AtomicMessage]) -> Result<Vec<OpOutput>, RuntimeError> {
        let ops = &self.operators;
        let body = |ctx: &mut crate::txn::TxnCtx<'_>| {
            let mut outs = Vec::with_capacity(kept.len());
            for m in kept {
                outs.push(ops[m.operator].apply(ctx, m.element, m.param)?);
            }
            Ok(outs)
        };
        let fault = |e: TxnError| RuntimeError::Fault(e.to_string());
        match self.cfg.mechanism {
            Mechanism::Htm(policy) => Ok(w.execute(&self.heap, &policy, body).map_err(fault)?.value),
            Mechanism::GlobalLock => Ok(w.execute_locked(&self.heap, body).map_err(fault)?.value),
            Mechanism::Atomics => kept
                .iter()
                .map(|m| {
                    let op = &ops[m.operator];
                    if op.supports_atomics() {
                        w.charge(self.cfg.cost.activity_overhead);
                        Ok(op.apply_atomic(&mut w.atomics(&self.heap), m.element, m.param))
                    } else {
                        w.execute_locked(&self.heap, |ctx| op.apply(ctx, m.element, m.param)).map(|o| o.value).map_err(fault)
                    }
                })
                .collect(),
        }
    }

    fn record_error(&self, e: RuntimeError) {
        self.error.lock().get_or_insert(e);
        self.halt.store(true, SeqCst);
    }

    fn reset_in_flight(&self) {
        for proc in &self.procs {
            proc.queue.lock().clear();
            proc.replies.lock().clear();
        }
        self.net.clear();
        self.pending.store(0, SeqCst);
        self.cancel.store(false, SeqCst);
        self.halt.store(false, SeqCst);
    }

    /// Runs until every spawned operator is resolved, a hook cancels, or an
    /// error occurs. Cancellation drops whatever is still in flight.
    pub fn run_to_quiescence(&mut self) -> Result<RunReport, RuntimeError> {
        self.started = true;
        self.runs += 1;
        let stats_before = self.stats.snapshot();
        let mut workers = std::mem::take(&mut self.workers);
        let clocks_before: Vec<f64> = workers.iter().map(Worker::clock).collect();
        for (p, ns) in self.driver_charge.lock().iter_mut().enumerate() {
            workers[p * self.cfg.threads].charge(std::mem::take(ns));
        }
        let wall = Instant::now();

        match self.cfg.mode {
            ExecMode::Threaded => self.run_threaded(&mut workers),
            ExecMode::Deterministic => self.run_deterministic(&mut workers),
        }

        let wall = wall.elapsed();
        let makespan_ns = workers.iter().zip(&clocks_before).map(|(w, b)| w.clock() - b).fold(0.0, f64::max);
        self.workers = workers;
        let cancelled = self.cancel.load(SeqCst);
        let error = self.error.lock().take();
        if cancelled || error.is_some() {
            self.reset_in_flight();
        }
        if let Some(e) = error {
            return Err(e);
        }
        debug_assert!(cancelled || self.pending.load(SeqCst) == 0);
        let net_after = self.net.stats();
        let net_before = std::mem::replace(&mut self.net_mark, net_after);
        let now = [&self.spawned, &self.executed, &self.replies, &self.activities].map(|c| c.load(SeqCst));
        let before = std::mem::replace(&mut self.marks, now);
        let [spawned, executed, replies, activities] = [0, 1, 2, 3].map(|i| now[i] - before[i]);
        Ok(RunReport {
            stats: self.stats.snapshot().since(&stats_before),
            makespan_ns,
            wall,
            spawned,
            executed,
            replies,
            activities,
            net: NetStats {
                batches: net_after.batches - net_before.batches,
                messages: net_after.messages - net_before.messages,
            },
            cancelled,
        })
    }

    fn stopped(&self) -> bool {
        self.cancel.load(SeqCst) || self.halt.load(SeqCst)
    }

    fn run_threaded(&self, workers: &mut [Worker]) {
        let epoch = Instant::now();
        let last_progress = AtomicU64::new(0);
        let threads = self.cfg.threads;
        std::thread::scope(|s| {
            for (i, w) in workers.iter_mut().enumerate() {
                let last_progress = &last_progress;
                s.spawn(move || {
                    let p = i / threads;
                    let mut idle = 0u32;
                    while !self.stopped() {
                        match self.step(p, w) {
                            Ok(true) => {
                                idle = 0;
                                last_progress.fetch_max(epoch.elapsed().as_nanos() as u64, SeqCst);
                            }
                            Ok(false) => {
                                if self.pending.load(SeqCst) == 0 {
                                    break;
                                }
                                let since = (epoch.elapsed().as_nanos() as u64).saturating_sub(last_progress.load(SeqCst));
                                if Duration::from_nanos(since) > self.cfg.watchdog {
                                    self.record_error(RuntimeError::Watchdog(self.cfg.watchdog));
                                    break;
                                }
                                idle = idle.saturating_add(1);
                                if idle < 64 {
                                    std::hint::spin_loop();
                                } else if idle < 256 {
                                    std::thread::yield_now();
                                } else {
                                    std::thread::sleep(Duration::from_micros(50));
                                }
                            }
                            Err(e) => {
                                self.record_error(e);
                                break;
                            }
                        }
                    }
                });
            }
        });
    }

    fn run_deterministic(&self, workers: &mut [Worker]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ self.runs.wrapping_mul(0xA24B_AED4_963E_E407));
        let threads = self.cfg.threads;
        let mut last_progress = Instant::now();
        while !self.stopped() && self.pending.load(SeqCst) > 0 {
            let busy: Vec<ProcessId> = (0..self.cfg.procs).filter(|&p| self.has_work(p)).collect();
            if busy.is_empty() {
                if last_progress.elapsed() > self.cfg.watchdog {
                    self.record_error(RuntimeError::Watchdog(self.cfg.watchdog));
                }
                std::thread::yield_now();
                continue;
            }
            let p = busy[rng.gen_range(0..busy.len())];
            let t = rng.gen_range(0..threads);
            match self.step(p, &mut workers[p * threads + t]) {
                Ok(true) => last_progress = Instant::now(),
                Ok(false) => {
                    // only undelivered latency batches remain
                    if last_progress.elapsed() > self.cfg.watchdog {
                        self.record_error(RuntimeError::Watchdog(self.cfg.watchdog));
                    }
                    std::thread::yield_now();
                }
                Err(e) => self.record_error(e),
            }
        }
    }
}
