//! Cooperative single-threaded scheduler for small scripted transactions.
//!
//! Each program advances one engine action per step (begin, one read or
//! write, commit, acquire the fallback lock, ...). [`explore`] visits every
//! reachable interleaving; [`run_random`] follows one seeded schedule. After
//! every step the heap is checked against a shadow copy that only changes on
//! commits, so an abort that leaks a value or a lock is caught at once.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::heap::{CellRef, Heap, LockState, Word};
use super::{AbortReason, AccOp, Txn};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expr {
    Const(Word),
    /// Value of the `reg`-th read of this program, plus a constant.
    Reg(usize, Word),
    /// Sum of all values read so far, plus a constant.
    SumPlus(Word),
}

impl Expr {
    pub fn eval(&self, regs: &[Word]) -> Word {
        match *self {
            Expr::Const(k) => k,
            Expr::Reg(r, k) => regs[r].wrapping_add(k),
            Expr::SumPlus(k) => regs.iter().fold(k, |a, &b| a.wrapping_add(b)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptOp {
    Read(CellRef),
    Write(CellRef, Expr),
    /// Writes only if read `reg` equals `equals`.
    WriteIf { reg: usize, equals: Word, cell: CellRef, value: Expr },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomicScript {
    /// Records 1 on success, 0 otherwise.
    Cas { cell: CellRef, compare: Word, new: Word },
    /// Records the previous value.
    Fao { cell: CellRef, arg: Word, op: AccOp },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Program {
    Txn(Vec<ScriptOp>),
    Atomic(AtomicScript),
}

#[derive(Debug, Clone, Copy)]
pub struct StepConfig {
    /// Aborts after which a program falls back to the global lock.
    pub serialize_after: u32,
    pub capacity: usize,
    /// Upper bound on distinct states visited by [`explore`].
    pub max_states: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig { serialize_after: 2, capacity: 64, max_states: 2_000_000 }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("invariant violated after step {step}: {msg}")]
    Invariant { step: usize, msg: String },
    #[error("no program can make progress")]
    Deadlock,
    #[error("state limit of {0} exceeded")]
    StateLimit(usize),
    #[error("malformed program {0}: {1}")]
    Malformed(usize, String),
}

/// Final heap values and, per program, the values read by its successful
/// execution (the result for atomics).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Terminal {
    pub values: Vec<Word>,
    pub reads: Vec<Vec<Word>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Exploration {
    pub terminals: BTreeSet<Terminal>,
    pub states: usize,
    pub abort_steps: u64,
    pub overflow_steps: u64,
    pub serialized_commits: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomRun {
    pub terminal: Terminal,
    pub schedule: Vec<usize>,
    pub aborts: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Spec,
    WantSerial,
    Draining,
    Serial,
    Done,
}

#[derive(Debug, Clone)]
struct Agent {
    phase: Phase,
    tx: Option<Txn>,
    ticket: u64,
    pc: usize,
    regs: Vec<Word>,
    aborts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    Progress,
    Abort(AbortReason),
    SerialCommit,
}

#[derive(Debug, Clone)]
struct Machine<'p> {
    programs: &'p [Program],
    cfg: StepConfig,
    heap: Heap,
    shadow: Vec<Word>,
    agents: Vec<Agent>,
    steps: usize,
}

impl<'p> Machine<'p> {
    fn new(programs: &'p [Program], init: &[Word], cfg: StepConfig) -> Result<Self, StepError> {
        validate(programs, init.len())?;
        let agents = programs
            .iter()
            .map(|_| Agent { phase: Phase::Idle, tx: None, ticket: 0, pc: 0, regs: Vec::new(), aborts: 0 })
            .collect();
        Ok(Machine {
            programs,
            cfg: StepConfig { serialize_after: cfg.serialize_after.max(1), ..cfg },
            heap: Heap::from_values(init.to_vec()),
            shadow: init.to_vec(),
            agents,
            steps: 0,
        })
    }

    fn done(&self) -> bool {
        self.agents.iter().all(|a| a.phase == Phase::Done)
    }

    fn enabled(&self, i: usize) -> bool {
        let a = &self.agents[i];
        match (&self.programs[i], a.phase) {
            (_, Phase::Done) => false,
            (Program::Atomic(s), _) => {
                let c = match *s {
                    AtomicScript::Cas { cell, .. } | AtomicScript::Fao { cell, .. } => cell,
                };
                matches!(self.heap.lock_state(c), LockState::Free | LockState::Txn(_))
            }
            (Program::Txn(_), Phase::Idle | Phase::WantSerial) => self.heap.serialized_holder().is_none(),
            (Program::Txn(_), Phase::Draining) => self.heap.serial_drained(),
            (Program::Txn(_), Phase::Spec | Phase::Serial) => true,
        }
    }

    fn enabled_agents(&self) -> Vec<usize> {
        (0..self.agents.len()).filter(|&i| self.enabled(i)).collect()
    }

    fn on_abort(&mut self, i: usize, reason: AbortReason) -> Event {
        let a = &mut self.agents[i];
        a.tx = None;
        a.aborts += 1;
        a.phase = if a.aborts >= self.cfg.serialize_after { Phase::WantSerial } else { Phase::Idle };
        Event::Abort(reason)
    }

    fn step(&mut self, i: usize) -> Result<Event, StepError> {
        self.steps += 1;
        let event = match &self.programs[i] {
            Program::Atomic(s) => self.step_atomic(i, *s),
            Program::Txn(ops) => self.step_txn(i, ops),
        };
        self.check()?;
        Ok(event)
    }

    fn step_atomic(&mut self, i: usize, s: AtomicScript) -> Event {
        let result = match s {
            AtomicScript::Cas { cell, compare, new } => {
                let ok = self.heap.try_atomic_cas(cell, compare, new, false).expect("enabled");
                if ok {
                    self.shadow[cell.0] = new;
                }
                ok as Word
            }
            AtomicScript::Fao { cell, arg, op } => {
                let prev = self.heap.try_atomic_fao(cell, arg, op, false).expect("enabled");
                self.shadow[cell.0] = op.apply(prev, arg);
                prev
            }
        };
        let a = &mut self.agents[i];
        a.regs = vec![result];
        a.phase = Phase::Done;
        Event::Progress
    }

    fn step_txn(&mut self, i: usize, ops: &[ScriptOp]) -> Event {
        let heap = &self.heap;
        let a = &mut self.agents[i];
        match a.phase {
            Phase::Idle => {
                a.tx = Some(heap.try_begin(self.cfg.capacity).expect("enabled"));
                a.pc = 0;
                a.regs.clear();
                a.phase = Phase::Spec;
                Event::Progress
            }
            Phase::WantSerial => {
                a.ticket = heap.try_acquire_serial().expect("enabled");
                a.phase = Phase::Draining;
                Event::Progress
            }
            Phase::Draining => {
                a.tx = Some(heap.begin_serial(a.ticket));
                a.pc = 0;
                a.regs.clear();
                a.phase = Phase::Serial;
                Event::Progress
            }
            Phase::Spec | Phase::Serial => {
                let serial = a.phase == Phase::Serial;
                let tx = a.tx.as_mut().expect("live");
                if a.pc == ops.len() {
                    let writes: Vec<(CellRef, Word)> = tx.write_set().collect();
                    return match heap.txn_commit(tx) {
                        Ok(()) => {
                            for (c, v) in writes {
                                self.shadow[c.0] = v;
                            }
                            a.tx = None;
                            a.phase = Phase::Done;
                            if serial {
                                Event::SerialCommit
                            } else {
                                Event::Progress
                            }
                        }
                        Err(r) => self.on_abort(i, r),
                    };
                }
                let r = match ops[a.pc] {
                    ScriptOp::Read(c) => heap.txn_read(tx, c).map(|v| a.regs.push(v)),
                    ScriptOp::Write(c, e) => heap.txn_write(tx, c, e.eval(&a.regs)),
                    ScriptOp::WriteIf { reg, equals, cell, value } => {
                        if a.regs[reg] == equals {
                            heap.txn_write(tx, cell, value.eval(&a.regs))
                        } else {
                            Ok(())
                        }
                    }
                };
                match r {
                    Ok(()) => {
                        a.pc += 1;
                        Event::Progress
                    }
                    Err(reason) => {
                        assert!(!serial, "serialized access aborted");
                        self.on_abort(i, reason)
                    }
                }
            }
            Phase::Done => unreachable!("done agents are never scheduled"),
        }
    }

    fn check(&self) -> Result<(), StepError> {
        let fail = |msg: String| Err(StepError::Invariant { step: self.steps, msg });
        let values = self.heap.values();
        if values != self.shadow {
            return fail(format!("heap {values:?} differs from committed state {:?}", self.shadow));
        }
        let live_spec = self.agents.iter().filter(|a| a.phase == Phase::Spec).count();
        if self.heap.live_transactions() != live_spec {
            return fail(format!("{} live transactions, {live_spec} speculating", self.heap.live_transactions()));
        }
        for c in 0..self.heap.len() {
            let cell = CellRef(c);
            let ok = match self.heap.lock_state(cell) {
                LockState::Free => true,
                LockState::Txn(id) => self.agents.iter().any(|a| {
                    a.phase == Phase::Spec
                        && a.tx.as_ref().is_some_and(|t| t.id() == id && t.write_set().any(|(w, _)| w == cell))
                }),
                LockState::Serial => self.agents.iter().any(|a| {
                    a.phase == Phase::Serial
                        && a.tx.as_ref().is_some_and(|t| t.read_set().any(|(r, _)| r == cell) || t.write_set().any(|(w, _)| w == cell))
                }),
                LockState::Committing(_) | LockState::Atomic => false,
            };
            if !ok {
                return fail(format!("cell {c} left in lock state {:?}", self.heap.lock_state(cell)));
            }
        }
        Ok(())
    }

    fn terminal(&self) -> Terminal {
        Terminal { values: self.heap.values(), reads: self.agents.iter().map(|a| a.regs.clone()).collect() }
    }

    fn key(&self) -> Vec<u64> {
        let mut k = Vec::with_capacity(self.heap.len() * 3 + self.agents.len() * 16);
        for c in 0..self.heap.len() {
            let cell = self.heap.cell(CellRef(c));
            use std::sync::atomic::Ordering::SeqCst;
            k.extend([cell.value.load(SeqCst), cell.version.load(SeqCst), cell.lock.load(SeqCst)]);
        }
        k.extend([
            self.heap.clock.load(std::sync::atomic::Ordering::SeqCst),
            self.heap.serialized_holder().unwrap_or(0),
            self.heap.live_transactions() as u64,
            self.heap.next_id.load(std::sync::atomic::Ordering::SeqCst),
        ]);
        for a in &self.agents {
            k.extend([a.phase as u64, a.pc as u64, a.aborts as u64, a.ticket, a.regs.len() as u64]);
            k.extend(&a.regs);
            match &a.tx {
                None => k.push(u64::MAX),
                Some(t) => {
                    k.extend([t.id(), t.read_version(), t.footprint() as u64]);
                    for (c, v) in t.read_set() {
                        k.extend([c.0 as u64, v]);
                    }
                    k.push(u64::MAX - 1);
                    for (c, v) in t.write_set() {
                        k.extend([c.0 as u64, v]);
                    }
                    k.push(u64::MAX - 2);
                }
            }
        }
        k
    }
}

fn validate(programs: &[Program], cells: usize) -> Result<(), StepError> {
    for (i, p) in programs.iter().enumerate() {
        let bad = |m: &str| Err(StepError::Malformed(i, m.to_string()));
        match p {
            Program::Atomic(AtomicScript::Cas { cell, .. } | AtomicScript::Fao { cell, .. }) => {
                if cell.0 >= cells {
                    return bad("cell out of range");
                }
            }
            Program::Txn(ops) => {
                let mut reads = 0;
                for op in ops {
                    let (cell, regs_used) = match *op {
                        ScriptOp::Read(c) => {
                            reads += 1;
                            (c, None)
                        }
                        ScriptOp::Write(c, e) => (c, expr_reg(e)),
                        ScriptOp::WriteIf { reg, cell, value, .. } => (cell, Some(reg.max(expr_reg(value).unwrap_or(0)))),
                    };
                    if cell.0 >= cells {
                        return bad("cell out of range");
                    }
                    if regs_used.is_some_and(|r| r >= reads) {
                        return bad("register used before its read");
                    }
                }
            }
        }
    }
    Ok(())
}

fn expr_reg(e: Expr) -> Option<usize> {
    match e {
        Expr::Reg(r, _) => Some(r),
        _ => None,
    }
}

/// Visits every interleaving of `programs` over a heap initialised to `init`,
/// collapsing identical intermediate states. Fails on the first invariant
/// violation.
pub fn explore(programs: &[Program], init: &[Word], cfg: StepConfig) -> Result<Exploration, StepError> {
    let root = Machine::new(programs, init, cfg)?;
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut out = Exploration::default();
    let mut stack = vec![root];
    while let Some(m) = stack.pop() {
        if !seen.insert(m.key()) {
            continue;
        }
        out.states += 1;
        if out.states > cfg.max_states {
            return Err(StepError::StateLimit(cfg.max_states));
        }
        if m.done() {
            out.terminals.insert(m.terminal());
            continue;
        }
        let enabled = m.enabled_agents();
        if enabled.is_empty() {
            return Err(StepError::Deadlock);
        }
        for i in enabled {
            let mut next = m.clone();
            match next.step(i)? {
                Event::Abort(r) => {
                    out.abort_steps += 1;
                    out.overflow_steps += u64::from(r == AbortReason::BufferOverflow);
                }
                Event::SerialCommit => out.serialized_commits += 1,
                Event::Progress => {}
            }
            stack.push(next);
        }
    }
    Ok(out)
}

/// Follows one schedule chosen uniformly among enabled programs by a seeded
/// RNG.
pub fn run_random(programs: &[Program], init: &[Word], cfg: StepConfig, seed: u64) -> Result<RandomRun, StepError> {
    let mut m = Machine::new(programs, init, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut schedule = Vec::new();
    let mut aborts = 0;
    while !m.done() {
        let enabled = m.enabled_agents();
        if enabled.is_empty() {
            return Err(StepError::Deadlock);
        }
        let i = enabled[rng.gen_range(0..enabled.len())];
        schedule.push(i);
        if let Event::Abort(_) = m.step(i)? {
            aborts += 1;
        }
    }
    Ok(RandomRun { terminal: m.terminal(), schedule, aborts })
}

/// Replays an explicit schedule. Entries naming a disabled program are an
/// error.
pub fn replay(programs: &[Program], init: &[Word], cfg: StepConfig, schedule: &[usize]) -> Result<Terminal, StepError> {
    let mut m = Machine::new(programs, init, cfg)?;
    for &i in schedule {
        if i >= programs.len() || !m.enabled(i) {
            return Err(StepError::Malformed(i, format!("not runnable at step {}", m.steps)));
        }
        m.step(i)?;
    }
    if !m.done() {
        return Err(StepError::Deadlock);
    }
    Ok(m.terminal())
}
