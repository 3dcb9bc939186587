//! Heat path versus central path.
//!
//! Everything here is indexed by annealing temperature `t`: the heat path
//! point is the mean of `P_{θ̂/t}` and the central path point minimizes
//! `θ̂ᵀx/t + φ(x)`, i.e. IPM temperature `1/t`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bodies::ConvexBody;
use crate::boltzmann::{self, BoltzmannParams};
use crate::error::{check_dim, Error, Result};
use crate::ipm::{center, Barrier};
use crate::path::{PathPoint, PathSource};
use crate::rng::{stream_id, StreamRole};
use crate::stats;
use crate::walker::{run_chain, ChainState, Trace};

/// Decrement at which a central path point counts as exact.
pub const CENTRAL_TOL: f64 = 1e-8;

/// `points` temperatures log-spaced from `2R` down to `R/50`.
pub fn default_grid(body: &ConvexBody, points: usize) -> Vec<f64> {
    let r = body.radius_bound();
    log_grid(2.0 * r, r / 50.0, points)
}

/// Log-spaced values from `hi` down to `lo`.
pub fn log_grid(hi: f64, lo: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![hi],
        _ => {
            let (a, b) = (hi.ln(), lo.ln());
            (0..points)
                .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
                .collect()
        }
    }
}

fn check_temperatures(temps: &[f64]) -> Result<()> {
    if temps.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidInput("temperatures must be positive and finite".into()));
    }
    Ok(())
}

/// Exact heat path: the mean of `P_{θ̂/t}` for each `t`.
pub fn heat_path(body: &ConvexBody, objective: &DVector<f64>, temps: &[f64]) -> Result<Vec<PathPoint>> {
    check_dim(body.dim(), objective.len())?;
    check_temperatures(temps)?;
    temps
        .par_iter()
        .map(|&t| {
            let m = boltzmann::moments(&BoltzmannParams::new(body, objective / t)?)?;
            Ok(PathPoint::new(t, &m.mean, PathSource::Heat))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatSampling {
    pub burn_in: u64,
    pub steps: u64,
    pub batches: usize,
    pub seed: u64,
}

impl Default for HeatSampling {
    fn default() -> Self {
        Self {
            burn_in: 2_000,
            steps: 100_000,
            batches: 50,
            seed: 0,
        }
    }
}

/// Heat path from one long chain per temperature, with batch-means
/// standard errors.
pub fn heat_path_sampled(
    body: &ConvexBody,
    objective: &DVector<f64>,
    temps: &[f64],
    cfg: &HeatSampling,
) -> Result<Vec<PathPoint>> {
    check_dim(body.dim(), objective.len())?;
    check_temperatures(temps)?;
    temps
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let p = BoltzmannParams::new(body, objective / t)?;
            let mut chain = ChainState::new(
                body,
                body.interior_point().clone(),
                cfg.seed,
                stream_id(StreamRole::Heat, i as u32),
            )?;
            if cfg.burn_in > 0 {
                run_chain(&mut chain, &p, cfg.burn_in, None)?;
            }
            let mut trace = Trace::every(1);
            run_chain(&mut chain, &p, cfg.steps, Some(&mut trace))?;
            let n = body.dim();
            let mut mean = DVector::zeros(n);
            let mut se = Vec::with_capacity(n);
            for axis in 0..n {
                let xs = trace.coordinate(axis);
                mean[axis] = stats::mean(&xs);
                se.push(stats::batch_means_std_error(&xs, cfg.batches));
            }
            let mut pt = PathPoint::new(t, &mean, PathSource::SampledHeat);
            pt.std_error = Some(se);
            Ok(pt)
        })
        .collect()
}

/// Central path of `backend`: for each `t`, Newton at IPM temperature `1/t`
/// warm-started from the previous point, to decrement below [`CENTRAL_TOL`].
pub fn central_path<B: Barrier + ?Sized>(
    objective: &DVector<f64>,
    backend: &B,
    temps: &[f64],
) -> Result<Vec<PathPoint>> {
    check_dim(backend.dim(), objective.len())?;
    check_temperatures(temps)?;
    let mut x = backend.start_point();
    let mut out = Vec::with_capacity(temps.len());
    for &t in temps {
        let st = center(backend, &x, 1.0 / t, objective, CENTRAL_TOL, 500)?;
        x = st.x_hat.clone();
        let mut pt = PathPoint::new(t, &st.x_hat, PathSource::Central);
        pt.decrement = Some(st.decrement);
        out.push(pt);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub t: f64,
    pub heat: Vec<f64>,
    pub central: Vec<f64>,
    pub residual: f64,
    /// Largest per-coordinate difference over the heat point's standard
    /// error, when the heat point was sampled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_in_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathComparison {
    pub rows: Vec<ComparisonRow>,
    pub max_residual: f64,
}

/// Pointwise `‖heat(t) − central(t)‖₂` over a shared grid.
pub fn compare_paths(heat: &[PathPoint], central: &[PathPoint]) -> Result<PathComparison> {
    if heat.len() != central.len() {
        return Err(Error::InvalidInput(format!(
            "temperature grids differ in length ({} vs {})",
            heat.len(),
            central.len()
        )));
    }
    let mut rows = Vec::with_capacity(heat.len());
    for (h, c) in heat.iter().zip(central) {
        if (h.t - c.t).abs() > 1e-12 * h.t.abs().max(c.t.abs()) {
            return Err(Error::InvalidInput(format!("temperature grids differ ({} vs {})", h.t, c.t)));
        }
        if h.x.len() != c.x.len() {
            return Err(Error::DimensionMismatch {
                expected: h.x.len(),
                got: c.x.len(),
            });
        }
        let diff: Vec<f64> = h.x.iter().zip(&c.x).map(|(a, b)| a - b).collect();
        let residual = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
        let residual_in_se = h.std_error.as_ref().map(|se| {
            diff.iter()
                .zip(se)
                .map(|(d, s)| d.abs() / s)
                .fold(0.0, f64::max)
        });
        rows.push(ComparisonRow {
            t: h.t,
            heat: h.x.clone(),
            central: c.x.clone(),
            residual,
            residual_in_se,
        });
    }
    let max_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(PathComparison { rows, max_residual })
}

/// Indices `i` where `θ̂ᵀx` increases from grid point `i − 1` to `i`
/// (temperatures are expected in decreasing order).
pub fn objective_increases(path: &[PathPoint], objective: &DVector<f64>, slack: f64) -> Vec<usize> {
    let vals: Vec<f64> = path.iter().map(|p| objective.dot(&p.point())).collect();
    (1..vals.len()).filter(|&i| vals[i] > vals[i - 1] + slack).collect()
}

/// First-order prediction of `x(θ′)` from moments at `θ`.
#[derive(Debug, Clone)]
pub struct Reweighting {
    /// `e^{−KL}·(x(θ) − Σ_θ(θ′ − θ))`.
    pub approx: DVector<f64>,
    /// `−Σ_θ(θ′ − θ)`.
    pub first_order_step: DVector<f64>,
    /// `e^{−KL(P_θ ‖ P_θ′)}`.
    pub damping: f64,
    pub kl: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

pub fn reweighting_update(body: &ConvexBody, theta: &DVector<f64>, theta_prime: &DVector<f64>) -> Result<Reweighting> {
    check_dim(body.dim(), theta_prime.len())?;
    let p = BoltzmannParams::new(body, theta.clone())?;
    let m = boltzmann::moments(&p)?;
    let kl = boltzmann::bregman_divergence(&p, theta_prime)?.max(0.0);
    let step = -(&m.covariance * (theta_prime - theta));
    let damping = (-kl).exp();
    Ok(Reweighting {
        approx: (&m.mean + &step) * damping,
        first_order_step: step,
        damping,
        kl,
        mean: m.mean,
        covariance: m.covariance,
    })
}
