//! Benchmarks producing CSV rows. Each benchmark checks the result of every
//! run before it records a row; a failed check is an error, never a row.

mod algorithm;
mod coalesce;
mod coarsen;
mod distributed;
mod micro;

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::algorithms::AlgoError;
use crate::graph::GraphError;
use crate::net::DistError;
use crate::runtime::RuntimeError;
use crate::txn::{StatsSnapshot, TxnError};

pub use algorithm::{bench_algorithm, AlgorithmConfig, AlgorithmRow};
pub use coalesce::{bench_coalesce_sweep, coalesce_crossover, CoalesceConfig, CoalesceRow, RemoteKind};
pub use coarsen::{bench_coarsen_sweep, default_m_range, CoarsenConfig, CoarsenRow};
pub use distributed::{bench_distributed, DistributedRow};
pub use micro::{bench_model_sweep, bench_single_vertex, ModelRow, ModelSweepConfig, SingleKind, SingleVertexConfig, SingleVertexRow};

/// `git describe` of the tree this binary was built from.
pub const BUILD_ID: &str = env!("AAM_BUILD_ID");

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Algo(#[from] AlgoError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Txn(#[from] TxnError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl BenchError {
    /// Process exit code: 1 for failed validation, 2 for bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Validation(_) => 1,
            BenchError::Algo(AlgoError::Runtime(_)) | BenchError::Runtime(_) | BenchError::Dist(_) | BenchError::Txn(_) => 1,
            _ => 2,
        }
    }
}

/// A CSV row plus the counters it was derived from.
#[derive(Debug, Clone)]
pub struct Measured<R> {
    pub row: R,
    pub stats: StatsSnapshot,
    /// Speculative capacity in cells, if transactions ran.
    pub capacity: Option<usize>,
}

impl<R> Measured<R> {
    /// Aborts add up by reason, and capacity aborts happened exactly when a
    /// footprint outgrew the capacity.
    pub fn accounting_ok(&self) -> bool {
        self.stats.accounting_holds() && self.capacity.is_none_or(|c| self.stats.capacity_consistent(c))
    }
}

pub fn write_csv<R: Serialize>(rows: impl IntoIterator<Item = R>, out: impl Write) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}
