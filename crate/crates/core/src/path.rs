//! Records shared by annealing, IPM and path-comparison traces.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathSource {
    Heat,
    Central,
    SampledHeat,
    Anneal,
    Ipm,
}

impl std::fmt::Display for PathSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PathSource::Heat => "heat",
            PathSource::Central => "central",
            PathSource::SampledHeat => "sampled-heat",
            PathSource::Anneal => "anneal",
            PathSource::Ipm => "ipm",
        };
        f.write_str(s)
    }
}

/// A point on a temperature-indexed path. `t` is whatever temperature the
/// producing method uses; see the producer for the convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub source: PathSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decrement: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    /// Per-coordinate Monte Carlo standard error, for sampled points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<Vec<f64>>,
}

impl PathPoint {
    pub fn new(t: f64, x: &DVector<f64>, source: PathSource) -> Self {
        Self {
            t,
            x: x.iter().copied().collect(),
            source,
            gap_bound: None,
            decrement: None,
            residual: None,
            std_error: None,
        }
    }

    pub fn point(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }
}
