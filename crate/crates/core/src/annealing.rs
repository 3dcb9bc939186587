//! Simulated annealing with Hit-and-Run and per-epoch covariance updates.
//!
//! Epoch `k` samples from `P_{θ̂/t_k}`. A main chain and `m` replica chains
//! are warm-started from the previous epoch; the replica endpoints set the
//! direction covariance for the next epoch.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bodies::ConvexBody;
use crate::boltzmann::{self, BoltzmannParams};
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::path::{PathPoint, PathSource};
use crate::rng::{stream_id, StreamRole, STREAM_RULE};
use crate::walker::{sample_batch, ChainState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ScheduleKind {
    /// `shrink = 1 − 1/√n`.
    Classic,
    /// `shrink = 1 − 1/(4√ν)`.
    Entropic,
    Custom { shrink: f64 },
}

/// Geometric temperature schedule `t_k = t1·shrink^k`, `k = 1..=epochs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub t1: f64,
    pub shrink: f64,
    pub epochs: usize,
    /// Barrier parameter the schedule was built for, if known.
    pub nu: Option<f64>,
    /// `ν` when known, else `n`; the gap bound at temperature `t` is `nu_eff·t`.
    pub nu_eff: f64,
}

impl Schedule {
    /// Temperature of epoch `k` (1-based).
    pub fn temperature(&self, k: usize) -> f64 {
        self.t1 * self.shrink.powi(k as i32)
    }

    pub fn temperatures(&self) -> Vec<f64> {
        (1..=self.epochs).map(|k| self.temperature(k)).collect()
    }

    pub fn gap_bound(&self, k: usize) -> f64 {
        self.nu_eff * self.temperature(k)
    }

    /// Ratio `γ` with `θ_{k+1} = (1 + γ) θ_k`.
    pub fn gamma(&self) -> f64 {
        1.0 / self.shrink - 1.0
    }
}

fn shrink_for(kind: ScheduleKind, n: usize, nu: f64) -> Result<f64> {
    let s = match kind {
        ScheduleKind::Classic => 1.0 - 1.0 / (n as f64).sqrt(),
        ScheduleKind::Entropic => 1.0 - 1.0 / (4.0 * nu.sqrt()),
        ScheduleKind::Custom { shrink } => shrink,
    };
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidInput(format!(
            "schedule shrink factor {s} is outside (0, 1) (classic needs n ≥ 2)"
        )));
    }
    Ok(s)
}

/// Least `k ≥ 0` with `t1·shrink^k ≤ target`.
fn epochs_to_reach(t1: f64, shrink: f64, target: f64) -> usize {
    if t1 <= target {
        return 0;
    }
    let mut k = ((t1 / target).ln() / (1.0 / shrink).ln()).ceil().max(0.0) as usize;
    // Guard against rounding in the logarithms.
    while k > 0 && t1 * shrink.powi(k as i32 - 1) <= target {
        k -= 1;
    }
    while t1 * shrink.powi(k as i32) > target {
        k += 1;
    }
    k
}

/// Schedule arithmetic without a body: dimension `n`, known `ν` if any.
pub fn schedule_for_dimension(kind: ScheduleKind, n: usize, nu: Option<f64>, eps: f64, t1: f64) -> Result<Schedule> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("eps must be positive".into()));
    }
    if !(t1 > 0.0) || !t1.is_finite() {
        return Err(Error::InvalidInput("t1 must be positive".into()));
    }
    if let Some(v) = nu {
        if !(v > 0.0) {
            return Err(Error::InvalidInput("nu must be positive".into()));
        }
    }
    let nu_eff = nu.unwrap_or(n as f64);
    let shrink = shrink_for(kind, n, nu_eff)?;
    let epochs = epochs_to_reach(t1, shrink, eps / nu_eff);
    if epochs == 0 {
        log::warn!("eps {eps} is already met at t1 = {t1}; schedule has no epochs");
    }
    Ok(Schedule {
        kind,
        t1,
        shrink,
        epochs,
        nu,
        nu_eff,
    })
}

/// Schedule for `body` with `t1 = estimate_diameter(body)`. `ν` comes from
/// `nu` if given, else from the body's override; entropic schedules fall
/// back to `ν = n`.
pub fn make_schedule(
    kind: ScheduleKind,
    body: &ConvexBody,
    objective: &DVector<f64>,
    eps: f64,
    nu: Option<f64>,
) -> Result<Schedule> {
    check_dim(body.dim(), objective.len())?;
    let nu = nu.or(body.nu_override());
    let nu = match kind {
        ScheduleKind::Entropic => Some(nu.unwrap_or(body.dim() as f64)),
        _ => nu,
    };
    schedule_for_dimension(kind, body.dim(), nu, eps, body.estimate_diameter())
}

/// Chain sizes and seeding for [`anneal`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// `N = ⌈c_mix·n³⌉` unless `steps` is set.
    pub c_mix: f64,
    pub steps: Option<u64>,
    /// `m = max(2n, 64)` unless set.
    pub replicas: Option<usize>,
    pub seed: u64,
    /// Keep replica endpoints per epoch for diagnostics.
    pub record_replicas: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            c_mix: 1.0,
            steps: None,
            replicas: None,
            seed: 0,
            record_replicas: false,
        }
    }
}

impl SamplerConfig {
    pub fn mix_steps(&self, n: usize) -> u64 {
        self.steps
            .unwrap_or_else(|| (self.c_mix * (n as f64).powi(3)).ceil() as u64)
            .max(1)
    }

    pub fn replica_count(&self, n: usize) -> usize {
        self.replicas.unwrap_or((2 * n).max(64)).max(1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub steps: u64,
    pub chords: u64,
    pub oracle_calls: u64,
    pub retries: u64,
}

impl Counters {
    pub(crate) fn absorb(&mut self, c: &ChainState) {
        self.steps += c.steps_taken;
        self.chords += c.chords;
        self.oracle_calls += c.oracle_calls;
        self.retries += c.retries;
    }
}

/// What happened in one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub t: f64,
    pub theta: Vec<f64>,
    /// Direction covariance the chains used during this epoch (row-major).
    pub sigma: Vec<f64>,
    /// False when the replica covariance was rank deficient and the
    /// previous one was kept.
    pub sigma_updated: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replicas: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnealReport {
    pub schedule: Schedule,
    pub replicas: usize,
    pub mix_steps: u64,
    pub trajectory: Vec<PathPoint>,
    pub final_x: Vec<f64>,
    pub final_gap_bound: f64,
    pub counters: Counters,
    pub wallclock_secs: f64,
    pub seed: u64,
    pub stream_rule: String,
    pub epochs: Vec<EpochRecord>,
}

/// Run annealing from the body's interior point with `Σ₁ = I`.
pub fn anneal(
    body: &ConvexBody,
    objective: &DVector<f64>,
    schedule: &Schedule,
    config: &SamplerConfig,
) -> Result<AnnealReport> {
    let n = body.dim();
    check_dim(n, objective.len())?;
    if objective.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("objective has non-finite entries".into()));
    }
    let start = Instant::now();
    let m = config.replica_count(n);
    let steps = config.mix_steps(n);
    let x0 = body.interior_point().clone();

    // Index 0 is the main chain; the rest are replicas.
    let mut chains = Vec::with_capacity(m + 1);
    chains.push(ChainState::new(body, x0.clone(), config.seed, stream_id(StreamRole::Main, 0))?);
    for j in 0..m {
        chains.push(ChainState::new(
            body,
            x0.clone(),
            config.seed,
            stream_id(StreamRole::Replica, j as u32),
        )?);
    }

    let mut sigma = DMatrix::identity(n, n);
    let mut trajectory = Vec::with_capacity(schedule.epochs);
    let mut epochs = Vec::with_capacity(schedule.epochs);
    for k in 1..=schedule.epochs {
        let t = schedule.temperature(k);
        let theta = objective / t;
        let p = BoltzmannParams::new(body, theta.clone())?;
        let ends = sample_batch(&p, &mut chains, steps)?;
        let replica_ends = &ends[1..];

        let used = sigma.clone();
        let updated = match next_sigma(replica_ends) {
            Some(s) => {
                sigma = s;
                for c in chains.iter_mut() {
                    c.set_sigma(&sigma)?;
                }
                true
            }
            None => {
                log::warn!("epoch {k}: replica covariance is rank deficient; keeping the previous one");
                false
            }
        };

        let mut pt = PathPoint::new(t, &ends[0], PathSource::Anneal);
        pt.gap_bound = Some(schedule.gap_bound(k));
        trajectory.push(pt);
        epochs.push(EpochRecord {
            epoch: k,
            t,
            theta: theta.iter().copied().collect(),
            sigma: used.transpose().iter().copied().collect(),
            sigma_updated: updated,
            replicas: if config.record_replicas {
                replica_ends.iter().map(|x| x.iter().copied().collect()).collect()
            } else {
                Vec::new()
            },
        });
    }

    let final_x = chains[0].x.clone();
    let final_gap_bound = if schedule.epochs == 0 {
        objective.norm() * body.estimate_diameter()
    } else {
        schedule.gap_bound(schedule.epochs)
    };
    let mut counters = Counters::default();
    for c in &chains {
        counters.absorb(c);
    }
    Ok(AnnealReport {
        schedule: schedule.clone(),
        replicas: m,
        mix_steps: steps,
        trajectory,
        final_x: final_x.iter().copied().collect(),
        final_gap_bound,
        counters,
        wallclock_secs: start.elapsed().as_secs_f64(),
        seed: config.seed,
        stream_rule: STREAM_RULE.to_string(),
        epochs,
    })
}

fn next_sigma(points: &[DVector<f64>]) -> Option<DMatrix<f64>> {
    let (_, cov) = linalg::mean_and_covariance(points).ok()?;
    if linalg::is_full_rank(&cov) {
        Some(linalg::regularize_covariance(&cov))
    } else {
        None
    }
}

/// Per-epoch health figures. Fields are `None` where the exact oracle or
/// the recorded replicas are unavailable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochDiagnostic {
    pub epoch: usize,
    pub t: f64,
    /// Isotropy constant of replicas whitened by the exact covariance.
    pub isotropy_c: Option<f64>,
    /// `‖empirical mean − exact mean‖₂`.
    pub mean_error: Option<f64>,
    /// Largest per-coordinate mean error in units of its standard error.
    pub mean_error_in_se: Option<f64>,
    /// `max(‖P_k/P_{k−1}‖, ‖P_{k−1}/P_k‖)`.
    pub l2_ratio_prev: Option<f64>,
}

/// Compare each recorded epoch against exact moments of the body.
pub fn epoch_diagnostics(report: &AnnealReport, body: &ConvexBody) -> Vec<EpochDiagnostic> {
    let mut out = Vec::with_capacity(report.epochs.len());
    let mut prev_theta: Option<DVector<f64>> = None;
    for rec in &report.epochs {
        let theta = DVector::from_column_slice(&rec.theta);
        let exact = BoltzmannParams::new(body, theta.clone())
            .and_then(|p| boltzmann::moments(&p))
            .ok();
        let samples: Vec<DVector<f64>> = rec.replicas.iter().map(|r| DVector::from_column_slice(r)).collect();
        let mut d = EpochDiagnostic {
            epoch: rec.epoch,
            t: rec.t,
            isotropy_c: None,
            mean_error: None,
            mean_error_in_se: None,
            l2_ratio_prev: None,
        };
        if let (Some(ex), true) = (&exact, samples.len() >= 2) {
            if let Ok((mean, cov)) = linalg::mean_and_covariance(&samples) {
                let diff = &mean - &ex.mean;
                d.mean_error = Some(diff.norm());
                let m = samples.len() as f64;
                d.mean_error_in_se = Some(
                    (0..diff.len())
                        .map(|i| diff[i].abs() / (cov[(i, i)] / m).sqrt())
                        .fold(0.0, f64::max),
                );
            }
            if let Ok(w) = whitening(&ex.covariance) {
                let whitened: Vec<DVector<f64>> = samples.iter().map(|x| &w * (x - &ex.mean)).collect();
                let id = DMatrix::identity(theta.len(), theta.len());
                d.isotropy_c = boltzmann::check_isotropy(&whitened, &id).ok();
            }
        }
        if let Some(prev) = &prev_theta {
            let a = boltzmann::l2_ratio_between(body, &theta, prev).ok();
            let b = boltzmann::l2_ratio_between(body, prev, &theta).ok();
            d.l2_ratio_prev = match (a, b) {
                (Some(a), Some(b)) => Some(a.max(b)),
                _ => None,
            };
        }
        prev_theta = Some(theta);
        out.push(d);
    }
    out
}

/// `Σ^{−1/2}` for a positive definite `Σ`.
fn whitening(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let root = linalg::sym_sqrt(&linalg::regularize_covariance(cov))?;
    linalg::spd_inverse(&root)
}
