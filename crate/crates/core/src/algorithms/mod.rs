//! Graph algorithms expressed as operators and failure handlers, plus
//! sequential reference implementations in [`oracle`].

mod bfs;
mod boman;
mod boruvka;
pub mod oracle;
mod pagerank;
mod st;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::graph::{Graph, Partition, ProcessId, VertexId};
use crate::runtime::{OperatorId, Runtime, RuntimeConfig, RuntimeError};
use crate::txn::Heap;

pub use bfs::{bfs, bfs_with, BfsOptions, BfsResult, UNVISITED};
pub use boman::{boman_coloring, ColoringResult, UNCOLORED};
pub use boruvka::{boruvka_mst, boruvka_mst_with, MstResult, RetryMode};
pub use pagerank::{pagerank, PrResult, DEFAULT_DAMPING};
pub use st::{st_connectivity, StResult};

#[derive(Debug, Error)]
pub enum AlgoError {
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("invalid input: {0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Bfs,
    PageRank,
    Mst,
    St,
    Color,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Algorithm::Bfs, Algorithm::PageRank, Algorithm::Mst, Algorithm::St, Algorithm::Color];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bfs => "bfs",
            Algorithm::PageRank => "pr",
            Algorithm::Mst => "mst",
            Algorithm::St => "st",
            Algorithm::Color => "color",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = AlgoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| AlgoError::Input(format!("unknown algorithm {s:?} (expected bfs|pr|mst|st|color)")))
    }
}

fn check_vertex(graph: &Graph, v: VertexId, what: &str) -> Result<(), AlgoError> {
    if v >= graph.num_vertices() {
        return Err(AlgoError::Input(format!("{what} {v} out of range for {} vertices", graph.num_vertices())));
    }
    Ok(())
}

fn runtime<'g>(cfg: &RuntimeConfig, graph: &Graph, heap: Heap) -> Result<Runtime<'g>, AlgoError> {
    Ok(Runtime::new(cfg.clone(), Partition::new(graph.num_vertices(), cfg.procs), heap)?)
}

/// Sends `op` on `element` from the process owning it.
fn seed(rt: &Runtime<'_>, op: OperatorId, element: VertexId, param: u64) -> Result<(), AlgoError> {
    let p: ProcessId = rt.partition().owner_unchecked(element);
    Ok(rt.send(p, op, element, param)?)
}
