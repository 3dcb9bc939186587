//! The dual parameter `θ(x)` with `mean(θ(x)) = x`, from exact or sampled
//! moments, and the Newton step built from it.

use nalgebra::{DMatrix, DVector};

use super::{backtrack, suboptimality_bound, FollowOptions, NewtonState, BOUNDARY_GUARD, ENTROPIC_NU_FACTOR};
use crate::bodies::ConvexBody;
use crate::boltzmann::{self, BoltzmannParams};
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::rng::{stream_id, StreamRole};
use crate::walker::{sample_batch, ChainState};

/// Moments of `P_θ`, possibly estimated.
#[derive(Debug, Clone)]
pub struct MomentEstimate {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Standard error of each mean coordinate; `None` when exact.
    pub std_error: Option<DVector<f64>>,
    pub log_partition: Option<f64>,
}

pub trait MomentSource {
    fn estimate(&mut self, body: &ConvexBody, theta: &DVector<f64>) -> Result<MomentEstimate>;
}

/// Exact moments from [`boltzmann::moments`].
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadratureMoments;

impl MomentSource for QuadratureMoments {
    fn estimate(&mut self, body: &ConvexBody, theta: &DVector<f64>) -> Result<MomentEstimate> {
        let m = boltzmann::moments(&BoltzmannParams::new(body, theta.clone())?)?;
        Ok(MomentEstimate {
            mean: m.mean,
            covariance: m.covariance,
            std_error: None,
            log_partition: Some(m.log_partition),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledMomentsConfig {
    /// Independent chains; one endpoint each per estimate.
    pub chains: usize,
    /// Hit-and-Run steps per chain per estimate.
    pub steps: u64,
    pub seed: u64,
}

impl SampledMomentsConfig {
    pub fn for_dimension(n: usize, seed: u64) -> Self {
        Self {
            chains: (2 * n).max(64),
            steps: (n.pow(3) as u64).max(1),
            seed,
        }
    }
}

/// Moments estimated from persistent, warm-started Hit-and-Run chains.
/// Each estimate advances every chain and then reshapes their direction
/// covariance to the new empirical one.
#[derive(Debug, Clone)]
pub struct SampledMoments {
    chains: Vec<ChainState>,
    steps: u64,
    pub estimates: usize,
}

impl SampledMoments {
    pub fn new(body: &ConvexBody, cfg: &SampledMomentsConfig) -> Result<Self> {
        if cfg.chains < body.dim() + 1 {
            return Err(Error::InvalidInput(format!(
                "sampled moments need at least n + 1 = {} chains",
                body.dim() + 1
            )));
        }
        let chains = (0..cfg.chains)
            .map(|j| {
                ChainState::new(
                    body,
                    body.interior_point().clone(),
                    cfg.seed,
                    stream_id(StreamRole::DualSampler, j as u32),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            chains,
            steps: cfg.steps.max(1),
            estimates: 0,
        })
    }

    pub fn oracle_calls(&self) -> u64 {
        self.chains.iter().map(|c| c.oracle_calls).sum()
    }
}

impl MomentSource for SampledMoments {
    fn estimate(&mut self, body: &ConvexBody, theta: &DVector<f64>) -> Result<MomentEstimate> {
        let p = BoltzmannParams::new(body, theta.clone())?;
        let ends = sample_batch(&p, &mut self.chains, self.steps)?;
        let (mean, cov) = linalg::mean_and_covariance(&ends)?;
        let m = ends.len() as f64;
        let se = DVector::from_fn(mean.len(), |i, _| (cov[(i, i)] / m).sqrt());
        if linalg::is_full_rank(&cov) {
            for c in self.chains.iter_mut() {
                c.set_sigma(&cov)?;
            }
        } else {
            log::warn!("sampled covariance is rank deficient; chains keep their previous shape");
        }
        self.estimates += 1;
        Ok(MomentEstimate {
            mean,
            covariance: linalg::regularize_covariance(&cov),
            std_error: Some(se),
            log_partition: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualOptions {
    /// Exact mode stops once `‖mean − x‖ ≤ tol` and the dual decrement
    /// `√((mean − x)ᵀΣ⁻¹(mean − x)) ≤ decrement_tol`. The second test keeps
    /// `∇φ` accurate in the local norm where the covariance is tiny.
    pub tol: f64,
    pub decrement_tol: f64,
    /// Sampled mode stops when every `|mean_i − x_i| ≤ se_factor·SE_i`.
    pub se_factor: f64,
    pub max_iters: usize,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            decrement_tol: 1e-11,
            se_factor: 3.0,
            max_iters: 100,
        }
    }
}

/// `θ(x)` together with the moments at it.
#[derive(Debug, Clone)]
pub struct DualPoint {
    pub theta: DVector<f64>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub std_error: Option<DVector<f64>>,
    pub log_partition: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn converged(est: &MomentEstimate, x: &DVector<f64>, opts: &DualOptions) -> Result<bool> {
    let r = &est.mean - x;
    Ok(match &est.std_error {
        None => r.norm() <= opts.tol && r.dot(&linalg::spd_solve(&est.covariance, &r)?).sqrt() <= opts.decrement_tol,
        Some(se) => r.iter().zip(se.iter()).all(|(ri, si)| ri.abs() <= opts.se_factor * si),
    })
}

/// Damped Newton ascent on `Ψ(θ) = −θᵀx − A(θ)`:
/// `θ ← θ + Σ⁻¹(mean − x)/(1 + λ)`. With exact moments the step is halved
/// until `Ψ` does not decrease.
pub fn solve_dual<S: MomentSource + ?Sized>(
    source: &mut S,
    body: &ConvexBody,
    x: &DVector<f64>,
    init: Option<&DVector<f64>>,
    opts: &DualOptions,
) -> Result<DualPoint> {
    let n = body.dim();
    check_dim(n, x.len())?;
    if !body.contains_raw(x) {
        return Err(Error::Precondition("dual solve point is not in the body".into()));
    }
    let mut theta = init.cloned().unwrap_or_else(|| DVector::zeros(n));
    check_dim(n, theta.len())?;
    let psi = |th: &DVector<f64>, e: &MomentEstimate| e.log_partition.map(|a| -th.dot(x) - a);

    let mut est = source.estimate(body, &theta)?;
    let mut best = (f64::INFINITY, theta.clone());
    for it in 0..=opts.max_iters {
        let r = &est.mean - x;
        let res = r.norm();
        if res < best.0 {
            best = (res, theta.clone());
        }
        if converged(&est, x, opts)? {
            return Ok(DualPoint {
                theta,
                mean: est.mean,
                covariance: est.covariance,
                std_error: est.std_error,
                log_partition: est.log_partition,
                iterations: it,
                residual: res,
            });
        }
        if it == opts.max_iters {
            break;
        }
        let d = linalg::spd_solve(&est.covariance, &r)?;
        let lam = r.dot(&d).max(0.0).sqrt();
        let mut step = d / (1.0 + lam);
        let here = psi(&theta, &est);
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &theta + &step;
            let e = source.estimate(body, &cand)?;
            match (here, psi(&cand, &e)) {
                (Some(h), Some(c)) if c < h - 1e-13 * h.abs().max(1.0) => step *= 0.5,
                _ => {
                    accepted = Some((cand, e));
                    break;
                }
            }
        }
        match accepted {
            Some((c, e)) => {
                theta = c;
                est = e;
            }
            None => break,
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iters,
        residual: best.0,
        best: best.1.iter().copied().collect(),
    })
}

/// `θ(x)` from exact moments, starting at `theta_init`.
pub fn dual_parameter_solve(body: &ConvexBody, x: &DVector<f64>, theta_init: &DVector<f64>) -> Result<DVector<f64>> {
    solve_dual(&mut QuadratureMoments, body, x, Some(theta_init), &DualOptions::default()).map(|d| d.theta)
}

/// Newton step `Σ(tθ̂ − θ(x))` and decrement `√(gᵀΣg)` at a solved dual point.
pub fn newton_direction_from_dual(dual: &DualPoint, t: f64, objective: &DVector<f64>) -> (DVector<f64>, f64) {
    let g = objective * t - &dual.theta;
    let step = &dual.covariance * &g;
    let lam = g.dot(&step).max(0.0).sqrt();
    (step, lam)
}

fn strictly_inside(body: &ConvexBody, x: &DVector<f64>) -> bool {
    match body.boundary_distance(x) {
        Some(d) => d > BOUNDARY_GUARD,
        None => body.contains_raw(x),
    }
}

/// Entropic Newton step with the inverse Hessian replaced by the
/// covariance at `θ(x̂)` from `source`. The returned state stores `θ` at
/// the new point, which warm-starts the next call.
pub fn sampled_newton_step<S: MomentSource + ?Sized>(
    source: &mut S,
    body: &ConvexBody,
    objective: &DVector<f64>,
    state: &NewtonState,
    opts: &DualOptions,
) -> Result<NewtonState> {
    check_dim(body.dim(), objective.len())?;
    let here = solve_dual(source, body, &state.x_hat, state.dual.as_ref(), opts)?;
    let (step, lam) = newton_direction_from_dual(&here, state.t, objective);
    let x_new = if lam == 0.0 {
        state.x_hat.clone()
    } else {
        backtrack(&state.x_hat, &(step / (1.0 + lam)), |c| strictly_inside(body, c))?
    };
    let there = solve_dual(source, body, &x_new, Some(&here.theta), opts)?;
    let (_, exit) = newton_direction_from_dual(&there, state.t, objective);
    Ok(NewtonState {
        x_hat: x_new,
        t: state.t,
        decrement: exit,
        k: state.k,
        entry_decrement: Some(lam),
        gap_bound: state.gap_bound,
        dual: Some(there.theta),
    })
}

/// Path following with [`sampled_newton_step`]. The decrement is recorded
/// but not enforced since it is itself a noisy estimate.
pub fn follow_path_sampled<S: MomentSource + ?Sized>(
    source: &mut S,
    body: &ConvexBody,
    objective: &DVector<f64>,
    eps: f64,
    opts: &FollowOptions,
    dual_opts: &DualOptions,
) -> Result<Vec<NewtonState>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("eps must be positive".into()));
    }
    let nu = body.nu_override().unwrap_or(ENTROPIC_NU_FACTOR * body.dim() as f64);
    let growth = 1.0 + opts.c / nu.sqrt();
    let x0 = opts.start.clone().unwrap_or_else(|| body.interior_point().clone());
    let mut st = NewtonState::at(x0, 1.0);
    for _ in 0..50 {
        st = sampled_newton_step(source, body, objective, &st, dual_opts)?;
        if st.decrement < 0.25 {
            break;
        }
    }
    st.entry_decrement = None;
    st.gap_bound = Some(suboptimality_bound(nu, 1.0));
    let mut out = vec![st];
    let mut k = 0;
    while suboptimality_bound(nu, out[k].t) > eps && k < opts.max_epochs {
        k += 1;
        let mut bumped = out[k - 1].clone();
        bumped.t = growth.powi(k as i32);
        bumped.k = k;
        bumped.gap_bound = Some(suboptimality_bound(nu, bumped.t));
        let next = sampled_newton_step(source, body, objective, &bumped, dual_opts)?;
        if next.decrement >= super::PATH_DECREMENT_LIMIT {
            log::warn!("sampled path: estimated decrement {:.3} at epoch {k}", next.decrement);
        }
        out.push(next);
    }
    Ok(out)
}
