use std::sync::atomic::{AtomicBool, Ordering::SeqCst};

use super::{check_vertex, runtime, AlgoError};
use crate::graph::{Graph, VertexId};
use crate::runtime::{FailureHandler, MessageClass, OpOutput, Operator, OperatorId, Reply, RunReport, RuntimeConfig, SpawnCtx};
use crate::txn::{AtomicCtx, HeapBuilder, Region, TxResult, TxnCtx};

const WHITE: u64 = 0;
const GREY: u64 = 1;
const GREEN: u64 = 2;

// operator replies
const ALREADY_MINE: u64 = 0;
const NEWLY_COLORED: u64 = 1;
const MET: u64 = 2;

#[derive(Debug, Clone)]
pub struct StResult {
    pub connected: bool,
    pub report: RunReport,
}

struct Paint<'g> {
    graph: &'g Graph,
    color: Region,
    me: OperatorId,
}

impl Operator for Paint<'_> {
    fn class(&self) -> MessageClass {
        MessageClass::FR_AS
    }

    fn apply(&self, ctx: &mut TxnCtx<'_>, v: VertexId, col: u64) -> TxResult<OpOutput> {
        let c = self.color.at(v);
        let cur = ctx.read(c)?;
        Ok(OpOutput::reply(if cur == col {
            ALREADY_MINE
        } else if cur != WHITE {
            MET
        } else {
            ctx.write(c, col)?;
            NEWLY_COLORED
        }))
    }

    fn supports_atomics(&self) -> bool {
        true
    }

    fn apply_atomic(&self, ctx: &mut AtomicCtx<'_>, v: VertexId, col: u64) -> OpOutput {
        let c = self.color.at(v);
        if ctx.cas(c, WHITE, col) {
            OpOutput::reply(NEWLY_COLORED)
        } else if ctx.load(c) == col {
            OpOutput::reply(ALREADY_MINE)
        } else {
            OpOutput::reply(MET)
        }
    }

    fn committed(&self, ctx: &mut SpawnCtx<'_>, v: VertexId, col: u64, out: &OpOutput) {
        if out.reply == NEWLY_COLORED {
            for &w in self.graph.neighbors(v) {
                ctx.spawn(self.me, w, col);
            }
        }
    }
}

struct Verdict<'a> {
    connected: &'a AtomicBool,
}

impl FailureHandler for Verdict<'_> {
    fn handle(&self, ctx: &mut SpawnCtx<'_>, reply: &Reply) {
        if reply.output.reply == MET {
            self.connected.store(true, SeqCst);
            ctx.cancel();
        }
    }
}

/// Two traversals from `s` and `t` painting vertices in different colors.
/// The first vertex reached by both decides the pair is connected.
pub fn st_connectivity(graph: &Graph, s: VertexId, t: VertexId, cfg: &RuntimeConfig) -> Result<StResult, AlgoError> {
    check_vertex(graph, s, "s")?;
    check_vertex(graph, t, "t")?;
    if s == t {
        return Ok(StResult { connected: true, report: RunReport::default() });
    }
    let mut b = HeapBuilder::new();
    let color = b.alloc(graph.num_vertices(), WHITE);
    let connected = AtomicBool::new(false);
    let mut rt = runtime(cfg, graph, b.build())?;
    let me = rt.next_operator_id();
    rt.register_operator(Box::new(Paint { graph, color, me }))?;
    rt.register_handler(me, Box::new(Verdict { connected: &connected }))?;
    super::seed(&rt, me, s, GREY)?;
    super::seed(&rt, me, t, GREEN)?;
    let report = rt.run_to_quiescence()?;
    Ok(StResult { connected: connected.load(SeqCst), report })
}
