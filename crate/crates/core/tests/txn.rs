mod common;

use std::sync::Arc;

use aam::txn::step::{explore, run_random, AtomicScript, Expr, Program, ScriptOp, StepConfig};
use aam::txn::{
    AbortReason, AccOp, CapacityProfile, CellRef, CostModel, HeapBuilder, Mechanism, RetryPolicy, RunStats, TxnSignal,
    Worker,
};
use common::sequential_terminals;
use proptest::prelude::*;

/// Raw op: (kind, cell, constant, register pick).
type RawOp = (u8, usize, u64, usize);

fn build_txn(raw: &[RawOp], cells: usize) -> Program {
    let mut reads = 0usize;
    let mut ops = Vec::new();
    for &(kind, cell, k, r) in raw {
        let c = CellRef(cell % cells);
        let value = if reads == 0 { Expr::Const(k) } else if k % 2 == 0 { Expr::Reg(r % reads, k) } else { Expr::SumPlus(k) };
        match kind % 4 {
            0 | 1 => {
                ops.push(ScriptOp::Read(c));
                reads += 1;
            }
            2 => ops.push(ScriptOp::Write(c, value)),
            _ if reads > 0 => ops.push(ScriptOp::WriteIf { reg: r % reads, equals: k % 2, cell: c, value }),
            _ => ops.push(ScriptOp::Write(c, value)),
        }
    }
    Program::Txn(ops)
}

fn program(cells: usize) -> impl Strategy<Value = Program> {
    prop_oneof![
        6 => prop::collection::vec((0u8..4, 0usize..6, 0u64..3, 0usize..4), 1..4).prop_map(move |raw| build_txn(&raw, cells)),
        1 => (0usize..6, 0u64..2, 1u64..3).prop_map(move |(c, cmp, new)| Program::Atomic(AtomicScript::Cas {
            cell: CellRef(c % cells),
            compare: cmp,
            new,
        })),
        1 => (0usize..6, 1u64..3).prop_map(move |(c, a)| Program::Atomic(AtomicScript::Fao {
            cell: CellRef(c % cells),
            arg: a,
            op: AccOp::Sum,
        })),
    ]
}

fn workload() -> impl Strategy<Value = (Vec<Program>, Vec<u64>, StepConfig)> {
    (1usize..=6, 1usize..=4, 1u32..=3, 2usize..=8).prop_flat_map(|(cells, k, serialize_after, capacity)| {
        (
            prop::collection::vec(program(cells), k),
            prop::collection::vec(0u64..3, cells),
            Just(StepConfig { serialize_after, capacity, ..StepConfig::default() }),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 96, ..ProptestConfig::default() })]

    /// Every interleaving ends in a state some serial order produces; the
    /// explorer also checks after every step that the heap equals the
    /// committed shadow, so each abort path restores the pre-transaction
    /// values.
    #[test]
    fn interleavings_are_serializable((programs, init, cfg) in workload()) {
        let ex = explore(&programs, &init, cfg).unwrap();
        let serial = sequential_terminals(&programs, &init);
        prop_assert!(!ex.terminals.is_empty());
        for t in &ex.terminals {
            prop_assert!(serial.contains(t), "{t:?} not reachable serially from {programs:?}");
        }
    }

    #[test]
    fn random_schedules_are_serializable((programs, init, cfg) in workload(), seed in any::<u64>()) {
        let run = run_random(&programs, &init, cfg, seed).unwrap();
        prop_assert!(sequential_terminals(&programs, &init).contains(&run.terminal));
    }
}

fn incr(c: usize) -> Program {
    Program::Txn(vec![ScriptOp::Read(CellRef(c)), ScriptOp::Write(CellRef(c), Expr::Reg(0, 1))])
}

#[test]
fn four_increments_on_one_cell() {
    let progs = vec![incr(0); 4];
    let ex = explore(&progs, &[0], StepConfig::default()).unwrap();
    assert!(ex.terminals.iter().all(|t| t.values == vec![4]));
    assert!(ex.abort_steps > 0 && ex.serialized_commits > 0);
}

#[test]
fn transfer_preserves_total() {
    let transfer = |from: usize, to: usize| {
        Program::Txn(vec![
            ScriptOp::Read(CellRef(from)),
            ScriptOp::Read(CellRef(to)),
            ScriptOp::Write(CellRef(from), Expr::Reg(0, u64::MAX)),
            ScriptOp::Write(CellRef(to), Expr::Reg(1, 1)),
        ])
    };
    let progs = vec![transfer(0, 1), transfer(1, 2), transfer(2, 0), transfer(0, 2)];
    let ex = explore(&progs, &[5, 5, 5], StepConfig::default()).unwrap();
    for t in &ex.terminals {
        assert_eq!(t.values.iter().sum::<u64>(), 15);
    }
}

#[test]
fn overflow_paths_still_serialize() {
    let wide = Program::Txn((0..6).map(|c| ScriptOp::Read(CellRef(c))).chain([ScriptOp::Write(CellRef(0), Expr::SumPlus(1))]).collect());
    let progs = vec![wide.clone(), incr(3), wide];
    let cfg = StepConfig { capacity: 4, serialize_after: 2, ..StepConfig::default() };
    let ex = explore(&progs, &[1, 0, 0, 0, 0, 0], cfg).unwrap();
    assert!(ex.overflow_steps > 0);
    let serial = sequential_terminals(&progs, &[1, 0, 0, 0, 0, 0]);
    assert!(ex.terminals.is_subset(&serial));
}

fn injected(policy: RetryPolicy) -> (u32, aam::txn::StatsSnapshot) {
    let mut b = HeapBuilder::new();
    let r = b.alloc(1, 0);
    let heap = b.build();
    let stats = Arc::new(RunStats::new());
    let mut w = Worker::new(0, 9, CostModel::default(), stats.clone()).without_real_backoff();
    let out = w
        .execute(&heap, &policy.with_other_aborts(1.0), |ctx| {
            let x = ctx.read(r.at(0))?;
            ctx.write(r.at(0), x + 1)
        })
        .unwrap();
    assert!(out.serialized);
    assert_eq!(heap.load(r.at(0)), 1, "exactly one execution took effect");
    (out.aborts, stats.snapshot())
}

#[test]
fn hle_serializes_after_one_abort() {
    let (aborts, s) = injected(RetryPolicy::hle());
    assert_eq!(aborts, 1);
    assert_eq!((s.aborts_other, s.serializations, s.commits), (1, 1, 0));
}

#[test]
fn bgq_serializes_after_ten_rollbacks() {
    for cap in [CapacityProfile::Short, CapacityProfile::Long] {
        let (aborts, s) = injected(RetryPolicy::bgq(cap));
        assert_eq!(aborts, 10);
        assert_eq!((s.aborts_other, s.serializations), (10, 1));
    }
}

#[test]
fn rtm_stays_within_retry_bound() {
    let (aborts, s) = injected(RetryPolicy::rtm());
    assert!(aborts <= RetryPolicy::RTM_MAX_RETRIES);
    assert_eq!(aborts, RetryPolicy::RTM_MAX_RETRIES);
    assert!(s.accounting_holds());
}

#[test]
fn partial_injection_never_exceeds_budget() {
    for seed in 0..50 {
        let mut b = HeapBuilder::new();
        let r = b.alloc(1, 0);
        let heap = b.build();
        let stats = Arc::new(RunStats::new());
        let mut w = Worker::new(0, seed, CostModel::default(), stats.clone()).without_real_backoff();
        for policy in [RetryPolicy::rtm(), RetryPolicy::hle(), RetryPolicy::bgq(CapacityProfile::Short)] {
            let out = w
                .execute(&heap, &policy.with_other_aborts(0.6), |ctx| {
                    let x = ctx.read(r.at(0))?;
                    ctx.write(r.at(0), x + 1)
                })
                .unwrap();
            assert!(out.aborts <= policy.serialize_after());
            assert_eq!(out.serialized, out.aborts == policy.serialize_after());
        }
        assert_eq!(heap.load(r.at(0)), 3);
        assert!(stats.snapshot().accounting_holds());
    }
}

#[test]
fn capacity_overflow_exactly_past_limit() {
    let policy = RetryPolicy::bgq(CapacityProfile::Cells(4));
    for width in 1..=8usize {
        let mut b = HeapBuilder::new();
        let r = b.alloc(8, 0);
        let heap = b.build();
        let stats = Arc::new(RunStats::new());
        let mut w = Worker::new(0, 1, CostModel::default(), stats.clone());
        w.execute(&heap, &policy, |ctx| {
            for i in 0..width {
                ctx.write(r.at(i), 1)?;
            }
            Ok(())
        })
        .unwrap();
        let s = stats.snapshot();
        assert_eq!(s.aborts_capacity > 0, width > 4, "width {width}");
        assert!(s.capacity_consistent(4));
    }
}

#[test]
fn fault_rolls_back() {
    let mut b = HeapBuilder::new();
    let r = b.alloc(2, 7);
    let heap = b.build();
    let mut w = Worker::new(0, 1, CostModel::default(), Arc::new(RunStats::new()));
    let err = w
        .execute(&heap, &RetryPolicy::rtm(), |ctx| {
            ctx.write(r.at(0), 1)?;
            Err::<(), _>(ctx.fault("boom"))
        })
        .unwrap_err();
    assert!(err.to_string().contains("boom"));
    assert_eq!(heap.values(), vec![7, 7]);
    assert_eq!(heap.live_transactions(), 0);
}

#[test]
fn threaded_counters_under_every_mechanism() {
    const THREADS: usize = 4;
    const PER: u64 = 300;
    for mech in Mechanism::all() {
        let mut b = HeapBuilder::new();
        let r = b.alloc(3, 0);
        let heap = b.build();
        let stats = Arc::new(RunStats::new());
        std::thread::scope(|s| {
            for t in 0..THREADS {
                let (heap, stats) = (&heap, stats.clone());
                s.spawn(move || {
                    let mut w = Worker::new(t, 3, CostModel::default(), stats);
                    for i in 0..PER {
                        let c = r.at((i % 3) as usize);
                        match mech {
                            Mechanism::Htm(p) => {
                                w.execute(heap, &p, |ctx| {
                                    let x = ctx.read(c)?;
                                    std::thread::yield_now();
                                    ctx.write(c, x + 1)
                                })
                                .unwrap();
                            }
                            Mechanism::GlobalLock => {
                                w.execute_locked(heap, |ctx| {
                                    let x = ctx.read(c)?;
                                    ctx.write(c, x + 1)
                                })
                                .unwrap();
                            }
                            Mechanism::Atomics => w.atomics(heap).acc(c, 1, AccOp::Sum),
                        }
                    }
                });
            }
        });
        let total: u64 = r.cells().map(|c| heap.load(c)).sum();
        assert_eq!(total, THREADS as u64 * PER, "{}", mech.name());
        let s = stats.snapshot();
        assert!(s.accounting_holds());
        if mech.is_htm() {
            assert_eq!(s.commits + s.serializations, THREADS as u64 * PER);
        }
    }
}

#[test]
fn explicit_abort_reason_is_counted() {
    let mut b = HeapBuilder::new();
    let r = b.alloc(1, 0);
    let heap = b.build();
    let stats = Arc::new(RunStats::new());
    let mut w = Worker::new(0, 1, CostModel::default(), stats.clone()).without_real_backoff();
    let mut first = true;
    w.execute(&heap, &RetryPolicy::rtm(), |ctx| {
        if std::mem::take(&mut first) {
            return Err(TxnSignal::Abort(AbortReason::MemoryConflict));
        }
        ctx.write(r.at(0), 1)
    })
    .unwrap();
    let s = stats.snapshot();
    assert_eq!((s.aborts_conflict, s.total_aborts, s.commits), (1, 1, 1));
}
