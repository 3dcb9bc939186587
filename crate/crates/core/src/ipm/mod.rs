//! Barrier path following with damped Newton steps.
//!
//! The IPM temperature `t` grows: iterates track the minimizer of
//! `Φ_t(x) = t·θ̂ᵀx + φ(x)`. On the entropic barrier that minimizer is the
//! mean of `P_{tθ̂}`, i.e. the heat path at annealing temperature `1/t`.

mod dual;

pub use dual::{
    dual_parameter_solve, follow_path_sampled, newton_direction_from_dual, sampled_newton_step, solve_dual,
    DualOptions, DualPoint, MomentEstimate, MomentSource, QuadratureMoments, SampledMoments, SampledMomentsConfig,
};

use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};

use crate::bodies::{BodyKind, ConvexBody};
use crate::boltzmann::{self, BoltzmannParams};
use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// Closer than this to the boundary, barriers refuse to evaluate.
pub const BOUNDARY_GUARD: f64 = 1e-12;

/// Decrement bound along a healthy path.
pub const PATH_DECREMENT_LIMIT: f64 = 1.0 / 3.0;

/// Default temperature growth constant `c` in `t_{k+1} = (1 + c/√ν) t_k`.
pub const DEFAULT_C: f64 = 1.0 / 20.0;

/// `φ(x)`, `∇φ(x)` and `∇²φ(x)`.
#[derive(Debug, Clone)]
pub struct BarrierEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl BarrierEval {
    /// `‖v‖_x = √(vᵀ∇²φ v)`.
    pub fn local_norm(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.hessian * v)).max(0.0).sqrt()
    }

    /// `‖v‖*_x = √(vᵀ∇⁻²φ v)`.
    pub fn dual_norm(&self, v: &DVector<f64>) -> Result<f64> {
        let w = linalg::spd_solve(&self.hessian, v)?;
        Ok(v.dot(&w).max(0.0).sqrt())
    }
}

/// A self-concordant barrier on the interior of a body.
pub trait Barrier: Send + Sync {
    fn dim(&self) -> usize;
    fn nu(&self) -> f64;
    /// Strict interior test used for backtracking.
    fn in_domain(&self, x: &DVector<f64>) -> bool;
    fn eval(&self, x: &DVector<f64>) -> Result<BarrierEval>;
    /// A point in the domain to start centering from.
    fn start_point(&self) -> DVector<f64>;
}

/// `φ(x) = −Σ log(bᵢ − aᵢᵀx)` with `ν` equal to the number of halfspaces.
#[derive(Debug, Clone)]
pub struct LogBarrier {
    a: DMatrix<f64>,
    b: DVector<f64>,
    start: DVector<f64>,
    nu: f64,
}

impl LogBarrier {
    pub fn from_halfspaces(a: DMatrix<f64>, b: DVector<f64>, start: DVector<f64>) -> Result<Self> {
        check_dim(a.nrows(), b.len())?;
        check_dim(a.ncols(), start.len())?;
        let nu = a.nrows() as f64;
        let me = Self { a, b, start, nu };
        if !me.in_domain(&me.start) {
            return Err(Error::InvalidInput("log barrier start point is not strictly feasible".into()));
        }
        Ok(me)
    }

    /// Boxes, simplices and H-polytopes.
    pub fn from_body(body: &ConvexBody) -> Result<Self> {
        let poly = match body.kind() {
            BodyKind::Box => body.to_hpolytope(),
            BodyKind::Simplex | BodyKind::HPolytope => Some(body.clone()),
            _ => None,
        }
        .ok_or_else(|| Error::Unsupported(format!("log barrier on a {} body", body.kind())))?;
        let (a, b) = poly.halfspaces().expect("polytope has halfspaces");
        Self::from_halfspaces(a.clone(), b.clone(), body.interior_point().clone())
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    fn slacks(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a * x
    }
}

impl Barrier for LogBarrier {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn nu(&self) -> f64 {
        self.nu
    }

    fn in_domain(&self, x: &DVector<f64>) -> bool {
        self.slacks(x).iter().all(|&s| s > 0.0)
    }

    fn eval(&self, x: &DVector<f64>) -> Result<BarrierEval> {
        check_dim(self.dim(), x.len())?;
        let s = self.slacks(x);
        for (i, &si) in s.iter().enumerate() {
            if si <= BOUNDARY_GUARD * self.a.row(i).norm() {
                return Err(Error::Precondition(format!("point is within {BOUNDARY_GUARD:e} of facet {i}")));
            }
        }
        let n = self.dim();
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        let mut value = 0.0;
        for i in 0..self.a.nrows() {
            let row = self.a.row(i).transpose();
            value -= s[i].ln();
            g.axpy(1.0 / s[i], &row, 1.0);
            h.ger(1.0 / (s[i] * s[i]), &row, &row, 1.0);
        }
        Ok(BarrierEval {
            value,
            gradient: g,
            hessian: h,
        })
    }

    fn start_point(&self) -> DVector<f64> {
        self.start.clone()
    }
}

/// The entropic barrier `φ(x) = sup_θ {−θᵀx − A(θ)}` with exact moments.
/// `∇φ(x) = −θ(x)` and `∇²φ(x) = Σ_{θ(x)}⁻¹` where `θ(x)` is the parameter
/// whose mean is `x`.
#[derive(Debug)]
pub struct EntropicBarrier {
    body: ConvexBody,
    nu: f64,
    opts: DualOptions,
    // Last dual solution, used as the next warm start.
    warm: Mutex<Option<DVector<f64>>>,
}

/// Safety factor over `ν ≤ n` used by default.
pub const ENTROPIC_NU_FACTOR: f64 = 1.1;

impl EntropicBarrier {
    pub fn new(body: &ConvexBody) -> Result<Self> {
        let n = body.dim();
        if body.box_bounds().is_none() && n > crate::quadrature::MAX_QUADRATURE_DIM {
            return Err(Error::Unsupported(format!(
                "exact entropic barrier on a {n}-dimensional {} body",
                body.kind()
            )));
        }
        let nu = body.nu_override().unwrap_or(ENTROPIC_NU_FACTOR * n as f64);
        Ok(Self {
            body: body.clone(),
            nu,
            opts: DualOptions::default(),
            warm: Mutex::new(None),
        })
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn with_dual_options(mut self, opts: DualOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn body(&self) -> &ConvexBody {
        &self.body
    }

    /// `θ(x)`, warm-started from the previous call.
    pub fn dual_point(&self, x: &DVector<f64>) -> Result<DualPoint> {
        self.check_interior(x)?;
        let init = self.warm.lock().expect("warm start lock").clone();
        let sol = solve_dual(&mut QuadratureMoments, &self.body, x, init.as_ref(), &self.opts)?;
        *self.warm.lock().expect("warm start lock") = Some(sol.theta.clone());
        Ok(sol)
    }

    fn check_interior(&self, x: &DVector<f64>) -> Result<()> {
        check_dim(self.body.dim(), x.len())?;
        let inside = match self.body.boundary_distance(x) {
            Some(d) => d > BOUNDARY_GUARD,
            None => self.body.contains_raw(x),
        };
        if inside {
            Ok(())
        } else {
            Err(Error::Precondition(format!("point is within {BOUNDARY_GUARD:e} of the boundary")))
        }
    }
}

impl Barrier for EntropicBarrier {
    fn dim(&self) -> usize {
        self.body.dim()
    }

    fn nu(&self) -> f64 {
        self.nu
    }

    fn in_domain(&self, x: &DVector<f64>) -> bool {
        self.check_interior(x).is_ok()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<BarrierEval> {
        let sol = self.dual_point(x)?;
        let a = match sol.log_partition {
            Some(a) => a,
            None => boltzmann::log_partition(&BoltzmannParams::new(&self.body, sol.theta.clone())?)?,
        };
        Ok(BarrierEval {
            value: -sol.theta.dot(x) - a,
            gradient: -&sol.theta,
            hessian: linalg::spd_inverse(&sol.covariance)?,
        })
    }

    fn start_point(&self) -> DVector<f64> {
        self.body.interior_point().clone()
    }
}

/// `φ(x) = ½‖x‖²` on all of ℝⁿ. Only useful for checking Newton logic.
#[derive(Debug, Clone)]
pub struct QuadraticBarrier {
    pub n: usize,
}

impl Barrier for QuadraticBarrier {
    fn dim(&self) -> usize {
        self.n
    }

    fn nu(&self) -> f64 {
        1.0
    }

    fn in_domain(&self, _x: &DVector<f64>) -> bool {
        true
    }

    fn eval(&self, x: &DVector<f64>) -> Result<BarrierEval> {
        check_dim(self.n, x.len())?;
        Ok(BarrierEval {
            value: 0.5 * x.norm_squared(),
            gradient: x.clone(),
            hessian: DMatrix::identity(self.n, self.n),
        })
    }

    fn start_point(&self) -> DVector<f64> {
        DVector::zeros(self.n)
    }
}

/// One iterate of the path follower.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonState {
    pub x_hat: DVector<f64>,
    /// IPM temperature.
    pub t: f64,
    /// `λ(x_hat, t)`.
    pub decrement: f64,
    pub k: usize,
    /// `λ` at the start of the step that produced this state.
    pub entry_decrement: Option<f64>,
    /// `(ν + √ν/4)/t`.
    pub gap_bound: Option<f64>,
    /// Dual parameter `θ(x_hat)` for entropic backends.
    pub dual: Option<DVector<f64>>,
}

impl NewtonState {
    pub fn at(x_hat: DVector<f64>, t: f64) -> Self {
        Self {
            x_hat,
            t,
            decrement: f64::NAN,
            k: 0,
            entry_decrement: None,
            gap_bound: None,
            dual: None,
        }
    }
}

/// Gradient of `Φ_t` and the Newton step `H⁻¹g` with its decrement.
fn newton_parts(ev: &BarrierEval, t: f64, objective: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let g = objective * t + &ev.gradient;
    let step = linalg::spd_solve(&ev.hessian, &g)?;
    let lam2 = g.dot(&step);
    if !lam2.is_finite() {
        return Err(Error::Numerical("Newton decrement is not finite".into()));
    }
    Ok((step, lam2.max(0.0).sqrt()))
}

/// Undamped Newton step `H⁻¹(tθ̂ + ∇φ(x))` and the decrement.
pub fn newton_direction<B: Barrier + ?Sized>(
    backend: &B,
    x: &DVector<f64>,
    t: f64,
    objective: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    check_dim(backend.dim(), objective.len())?;
    newton_parts(&backend.eval(x)?, t, objective)
}

/// `λ(x, t) = √(gᵀH⁻¹g)` with `g = tθ̂ + ∇φ(x)`.
pub fn newton_decrement<B: Barrier + ?Sized>(backend: &B, x: &DVector<f64>, t: f64, objective: &DVector<f64>) -> Result<f64> {
    check_dim(backend.dim(), objective.len())?;
    let ev = backend.eval(x)?;
    Ok(newton_parts(&ev, t, objective)?.1)
}

/// Largest `2^{-j}` fraction of `step` that keeps `x − frac·step` in the domain.
pub(crate) fn backtrack<F: Fn(&DVector<f64>) -> bool>(x: &DVector<f64>, step: &DVector<f64>, inside: F) -> Result<DVector<f64>> {
    let mut frac = 1.0;
    for _ in 0..60 {
        let cand = x - step * frac;
        if inside(&cand) {
            return Ok(cand);
        }
        frac *= 0.5;
    }
    Err(Error::Numerical("Newton step cannot be shortened into the domain".into()))
}

/// One damped Newton step on `Φ_{state.t}`. The returned state carries the
/// entry and exit decrements.
pub fn damped_newton_step<B: Barrier + ?Sized>(backend: &B, state: &NewtonState, objective: &DVector<f64>) -> Result<NewtonState> {
    check_dim(backend.dim(), objective.len())?;
    let ev = backend.eval(&state.x_hat)?;
    let (step, lam) = newton_parts(&ev, state.t, objective)?;
    let x_new = if lam == 0.0 {
        state.x_hat.clone()
    } else {
        backtrack(&state.x_hat, &(step / (1.0 + lam)), |c| backend.in_domain(c))?
    };
    let exit = newton_decrement(backend, &x_new, state.t, objective)?;
    Ok(NewtonState {
        x_hat: x_new,
        t: state.t,
        decrement: exit,
        k: state.k,
        entry_decrement: Some(lam),
        gap_bound: state.gap_bound,
        dual: None,
    })
}

/// Damped Newton at fixed `t` until `λ < tol`.
pub fn center<B: Barrier + ?Sized>(
    backend: &B,
    x0: &DVector<f64>,
    t: f64,
    objective: &DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<NewtonState> {
    let mut st = NewtonState::at(x0.clone(), t);
    st.decrement = newton_decrement(backend, x0, t, objective)?;
    let mut iters = 0;
    while st.decrement >= tol {
        if iters == max_iters {
            return Err(Error::NonConvergence {
                iterations: iters,
                residual: st.decrement,
                best: st.x_hat.iter().copied().collect(),
            });
        }
        st = damped_newton_step(backend, &st, objective)?;
        iters += 1;
    }
    st.entry_decrement = None;
    Ok(st)
}

#[derive(Debug, Clone)]
pub struct FollowOptions {
    pub c: f64,
    /// Where centering at `t = 1` starts; the backend's start point if unset.
    pub start: Option<DVector<f64>>,
    pub center_tol: f64,
    pub max_epochs: usize,
}

impl Default for FollowOptions {
    fn default() -> Self {
        Self {
            c: DEFAULT_C,
            start: None,
            center_tol: 1e-10,
            max_epochs: 1_000_000,
        }
    }
}

/// `(ν + √ν/4)/t`.
pub fn suboptimality_bound(nu: f64, t: f64) -> f64 {
    (nu + nu.sqrt() / 4.0) / t
}

/// Short-step path following: `t_k = (1 + c/√ν)^k`, one damped Newton step
/// per temperature, until `(ν + √ν/4)/t_k ≤ eps`. Element 0 is the centered
/// start at `t = 1`.
pub fn follow_path<B: Barrier + ?Sized>(
    backend: &B,
    objective: &DVector<f64>,
    eps: f64,
    opts: &FollowOptions,
) -> Result<Vec<NewtonState>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("eps must be positive".into()));
    }
    check_dim(backend.dim(), objective.len())?;
    let nu = backend.nu();
    let growth = 1.0 + opts.c / nu.sqrt();
    let x0 = opts.start.clone().unwrap_or_else(|| backend.start_point());
    let mut st = center(backend, &x0, 1.0, objective, opts.center_tol, 500)?;
    st.gap_bound = Some(suboptimality_bound(nu, 1.0));
    let mut out = vec![st];
    let mut k = 0;
    while suboptimality_bound(nu, out[k].t) > eps {
        if k == opts.max_epochs {
            return Err(Error::NonConvergence {
                iterations: k,
                residual: suboptimality_bound(nu, out[k].t),
                best: out[k].x_hat.iter().copied().collect(),
            });
        }
        k += 1;
        let mut bumped = out[k - 1].clone();
        bumped.t = growth.powi(k as i32);
        bumped.k = k;
        bumped.gap_bound = Some(suboptimality_bound(nu, bumped.t));
        let next = damped_newton_step(backend, &bumped, objective)?;
        if !(next.decrement < PATH_DECREMENT_LIMIT) {
            return Err(Error::PathLoss {
                epoch: k,
                decrement: next.decrement,
            });
        }
        out.push(next);
    }
    Ok(out)
}
