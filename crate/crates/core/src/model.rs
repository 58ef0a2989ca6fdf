//! Linear cost model `time = A·N + B` for activities touching `N` vertices,
//! fitted separately for atomics and transactions.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMechanism {
    Atomics,
    Htm,
}

impl fmt::Display for SampleMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleMechanism::Atomics => "atomics",
            SampleMechanism::Htm => "htm",
        })
    }
}

impl FromStr for SampleMechanism {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "atomics" => Ok(SampleMechanism::Atomics),
            "htm" => Ok(SampleMechanism::Htm),
            _ => Err(ModelError::Csv(format!("unknown mechanism {s:?}"))),
        }
    }
}

/// Mean time of one activity modifying `n_vertices` vertices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSample {
    pub mechanism: SampleMechanism,
    pub n_vertices: u64,
    pub mean_time_ns: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    /// Time per vertex (A).
    pub slope: f64,
    /// Fixed time per activity (B).
    pub intercept: f64,
    pub r2: f64,
}

impl LinearFit {
    pub fn predict(&self, n: f64) -> f64 {
        self.slope * n + self.intercept
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("fit needs at least two distinct vertex counts")]
    Degenerate,
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("no samples for mechanism {0}")]
    Missing(SampleMechanism),
}

/// Ordinary least squares over `(x, y)` points.
pub fn fit_points(points: &[(f64, f64)]) -> Result<LinearFit, ModelError> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return Err(ModelError::Degenerate);
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(ModelError::Degenerate);
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    // constant data is fitted exactly by a flat line
    let r2 = if ss_tot == 0.0 { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    Ok(LinearFit { slope, intercept, r2 })
}

pub fn fit_linear(samples: &[CostSample]) -> Result<LinearFit, ModelError> {
    for s in samples {
        if s.n_vertices == 0 || !(s.mean_time_ns > 0.0) {
            return Err(ModelError::InvalidSample(format!("{s:?}")));
        }
    }
    let points: Vec<(f64, f64)> = samples.iter().map(|s| (s.n_vertices as f64, s.mean_time_ns)).collect();
    fit_points(&points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NoCrossing {
    /// Transactions do not scale better per vertex than atomics.
    SlopeNotSmaller,
    /// Transactions are not more expensive at small N.
    InterceptNotLarger,
}

impl fmt::Display for NoCrossing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoCrossing::SlopeNotSmaller => "HTM slope is not below the atomics slope",
            NoCrossing::InterceptNotLarger => "HTM intercept is not above the atomics intercept",
        })
    }
}

/// Activity size beyond which the transactional line lies below the
/// atomics line.
pub fn crossing_point(at: &LinearFit, htm: &LinearFit) -> Result<f64, NoCrossing> {
    if at.slope <= htm.slope {
        return Err(NoCrossing::SlopeNotSmaller);
    }
    if htm.intercept <= at.intercept {
        return Err(NoCrossing::InterceptNotLarger);
    }
    Ok((htm.intercept - at.intercept) / (at.slope - htm.slope))
}

/// Reads `mechanism,n_vertices,mean_time_ns` rows; other columns are ignored.
pub fn read_samples(reader: impl Read) -> Result<Vec<CostSample>, ModelError> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(|e| ModelError::Csv(e.to_string()))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelFits {
    pub atomics: LinearFit,
    pub htm: LinearFit,
    pub crossing: Result<f64, NoCrossing>,
}

pub fn fit_both(samples: &[CostSample]) -> Result<ModelFits, ModelError> {
    let pick = |m: SampleMechanism| -> Result<LinearFit, ModelError> {
        let of: Vec<CostSample> = samples.iter().filter(|s| s.mechanism == m).copied().collect();
        if of.is_empty() {
            return Err(ModelError::Missing(m));
        }
        fit_linear(&of)
    };
    let atomics = pick(SampleMechanism::Atomics)?;
    let htm = pick(SampleMechanism::Htm)?;
    Ok(ModelFits { atomics, htm, crossing: crossing_point(&atomics, &htm) })
}
