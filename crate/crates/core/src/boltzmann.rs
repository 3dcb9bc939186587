//! The Boltzmann family `P_θ(x) ∝ exp(−θᵀx)` on a body.
//!
//! Boxes are handled analytically in any dimension (the family factorizes
//! over axes). Other bodies go through [`crate::quadrature`] and are
//! limited to three dimensions. These are the ground-truth moments that the
//! sampler and the barriers are checked against.

use nalgebra::{DMatrix, DVector};

use crate::bodies::{polytope_vertices, ConvexBody};
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::quadrature::{self, QuadratureOptions};

/// Natural parameter `θ` together with the body it lives on.
#[derive(Debug, Clone)]
pub struct BoltzmannParams<'a> {
    pub theta: DVector<f64>,
    pub body: &'a ConvexBody,
}

impl<'a> BoltzmannParams<'a> {
    pub fn new(body: &'a ConvexBody, theta: DVector<f64>) -> Result<Self> {
        check_dim(body.dim(), theta.len())?;
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("theta has non-finite entries".into()));
        }
        Ok(Self { theta, body })
    }

    /// `exp(−θᵀx − A(θ))` given a precomputed `A(θ)`.
    pub fn density(&self, x: &[f64], log_partition: f64) -> f64 {
        (-dot(self.theta.as_slice(), x) - log_partition).exp()
    }
}

/// Mean `x(θ) = −∇A(θ)`, covariance `∇²A(θ)` and `A(θ)`.
#[derive(Debug, Clone)]
pub struct MomentSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub log_partition: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// Analytic box path. Each axis is a truncated exponential on [lo, hi]; with
// s = θ·(hi − lo) everything reduces to functions of s on [0, 1].

/// `log ∫₀¹ e^{−s u} du`.
fn log_unit_z(s: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else if s > 0.0 {
        (-(-s).exp_m1()).ln() - s.ln()
    } else {
        -s + log_unit_z(-s)
    }
}

/// Mean of `u ∝ e^{−s u}` on [0, 1]: `1/s − 1/(e^s − 1)`.
fn unit_mean(s: f64) -> f64 {
    if s.abs() < 0.05 {
        let s2 = s * s;
        0.5 - s / 12.0 + s * s2 / 720.0 - s * s2 * s2 / 30240.0
    } else {
        1.0 / s - 1.0 / s.exp_m1()
    }
}

/// Variance of `u ∝ e^{−s u}` on [0, 1]: `1/s² − 1/(4 sinh²(s/2))`.
fn unit_variance(s: f64) -> f64 {
    if s.abs() < 0.05 {
        let s2 = s * s;
        1.0 / 12.0 - s2 / 240.0 + s2 * s2 / 6048.0 - s2 * s2 * s2 / 172_800.0
    } else {
        let sh = (0.5 * s).sinh();
        1.0 / (s * s) - 1.0 / (4.0 * sh * sh)
    }
}

fn box_moments(theta: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> MomentSummary {
    let n = theta.len();
    let mut mean = DVector::zeros(n);
    let mut var = DVector::zeros(n);
    let mut a = 0.0;
    for i in 0..n {
        let len = hi[i] - lo[i];
        let s = theta[i] * len;
        a += len.ln() - theta[i] * lo[i] + log_unit_z(s);
        mean[i] = lo[i] + len * unit_mean(s);
        var[i] = len * len * unit_variance(s);
    }
    MomentSummary {
        mean,
        covariance: DMatrix::from_diagonal(&var),
        log_partition: a,
    }
}

fn box_log_partition(theta: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> f64 {
    (0..theta.len())
        .map(|i| {
            let len = hi[i] - lo[i];
            len.ln() - theta[i] * lo[i] + log_unit_z(theta[i] * len)
        })
        .sum()
}

// ---------------------------------------------------------------------------
// Quadrature path.

/// Lower bound on `min_K θᵀx`, exact for analytic bodies. Used to keep the
/// integrand `exp(−(θᵀx − shift))` within `(0, 1]`.
fn exponent_shift(body: &ConvexBody, theta: &DVector<f64>) -> f64 {
    if let Some((lo, hi)) = body.box_bounds() {
        return (0..theta.len())
            .map(|i| (theta[i] * lo[i]).min(theta[i] * hi[i]))
            .sum();
    }
    if let Some((center, radius)) = body.ball_geometry() {
        return theta.dot(center) - radius * theta.norm();
    }
    if let Some((a, b)) = body.halfspaces() {
        let verts = polytope_vertices(a, b);
        if !verts.is_empty() {
            return verts.iter().map(|v| theta.dot(v)).fold(f64::INFINITY, f64::min);
        }
    }
    let x0 = body.interior_point();
    theta.dot(x0) - theta.norm() * (body.radius_bound() + x0.norm())
}

fn quadrature_log_partition(p: &BoltzmannParams<'_>, opts: &QuadratureOptions) -> Result<f64> {
    let shift = exponent_shift(p.body, &p.theta);
    let th = p.theta.as_slice();
    let z = quadrature::integrate(p.body, 1, |x, o| o[0] = (shift - dot(th, x)).exp(), opts)?;
    finite_log(z[0]).map(|lz| lz - shift)
}

fn finite_log(z: f64) -> Result<f64> {
    if z > 0.0 && z.is_finite() {
        Ok(z.ln())
    } else {
        Err(Error::Numerical(format!("partition integral is {z}")))
    }
}

/// Moments by quadrature regardless of body kind (boxes included).
pub fn moments_by_quadrature(p: &BoltzmannParams<'_>, opts: &QuadratureOptions) -> Result<MomentSummary> {
    let n = p.body.dim();
    let shift = exponent_shift(p.body, &p.theta);
    let th = p.theta.as_slice();

    // First pass: mass and mean.
    let first = quadrature::integrate(
        p.body,
        n + 1,
        |x, o| {
            let w = (shift - dot(th, x)).exp();
            o[0] = w;
            for i in 0..n {
                o[i + 1] = w * x[i];
            }
        },
        opts,
    )?;
    let z = first[0];
    let lz = finite_log(z)?;
    let center: Vec<f64> = (0..n).map(|i| first[i + 1] / z).collect();

    // Second pass: moments about the first-pass mean.
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let second = quadrature::integrate(
        p.body,
        1 + n + pairs.len(),
        |x, o| {
            let w = (shift - dot(th, x)).exp();
            o[0] = w;
            for i in 0..n {
                o[1 + i] = w * (x[i] - center[i]);
            }
            for (k, &(i, j)) in pairs.iter().enumerate() {
                o[1 + n + k] = w * (x[i] - center[i]) * (x[j] - center[j]);
            }
        },
        opts,
    )?;
    let z2 = second[0];
    let offset: Vec<f64> = (0..n).map(|i| second[1 + i] / z2).collect();
    let mean = DVector::from_fn(n, |i, _| center[i] + offset[i]);
    let mut cov = DMatrix::zeros(n, n);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let c = second[1 + n + k] / z2 - offset[i] * offset[j];
        cov[(i, j)] = c;
        cov[(j, i)] = c;
    }
    Ok(MomentSummary {
        mean,
        covariance: cov,
        log_partition: lz - shift,
    })
}

fn quadrature_supported(body: &ConvexBody) -> Result<()> {
    if body.dim() > quadrature::MAX_QUADRATURE_DIM {
        return Err(Error::Unsupported(format!(
            "exact moments of a {}-dimensional {} body (quadrature stops at {})",
            body.dim(),
            body.kind(),
            quadrature::MAX_QUADRATURE_DIM
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Public operations.

/// `A(θ) = log ∫_K exp(−θᵀx) dx`.
pub fn log_partition(p: &BoltzmannParams<'_>) -> Result<f64> {
    if let Some((lo, hi)) = p.body.box_bounds() {
        return Ok(box_log_partition(&p.theta, lo, hi));
    }
    quadrature_supported(p.body)?;
    quadrature_log_partition(p, &QuadratureOptions::default())
}

pub fn moments(p: &BoltzmannParams<'_>) -> Result<MomentSummary> {
    if let Some((lo, hi)) = p.body.box_bounds() {
        return Ok(box_moments(&p.theta, lo, hi));
    }
    quadrature_supported(p.body)?;
    moments_by_quadrature(p, &QuadratureOptions::default())
}

/// `D_A(θ′, θ) = A(θ′) − A(θ) − ∇A(θ)ᵀ(θ′ − θ)`, which equals `KL(P_θ ‖ P_θ′)`.
pub fn bregman_divergence(p: &BoltzmannParams<'_>, theta_prime: &DVector<f64>) -> Result<f64> {
    check_dim(p.body.dim(), theta_prime.len())?;
    let here = moments(p)?;
    let there = log_partition(&BoltzmannParams::new(p.body, theta_prime.clone())?)?;
    let step = theta_prime - &p.theta;
    Ok(there - here.log_partition + here.mean.dot(&step))
}

/// `KL(P_a ‖ P_b)` by direct quadrature of `p_a log(p_a / p_b)`.
pub fn kl_divergence_direct(body: &ConvexBody, theta_a: &DVector<f64>, theta_b: &DVector<f64>) -> Result<f64> {
    quadrature_supported(body)?;
    let pa = BoltzmannParams::new(body, theta_a.clone())?;
    let pb = BoltzmannParams::new(body, theta_b.clone())?;
    let aa = log_partition(&pa)?;
    let ab = log_partition(&pb)?;
    let r = quadrature::integrate(
        body,
        1,
        |x, o| {
            let la = -dot(pa.theta.as_slice(), x) - aa;
            let lb = -dot(pb.theta.as_slice(), x) - ab;
            o[0] = la.exp() * (la - lb);
        },
        &QuadratureOptions::default(),
    )?;
    Ok(r[0])
}

/// `‖P_a / P_b‖ = ∫ (dP_a/dP_b) dP_a = exp(A(b) − 2A(a) + A(2a − b))`.
pub fn l2_ratio_between(body: &ConvexBody, theta_a: &DVector<f64>, theta_b: &DVector<f64>) -> Result<f64> {
    let lp = |t: DVector<f64>| -> Result<f64> { log_partition(&BoltzmannParams::new(body, t)?) };
    let reflected = theta_a * 2.0 - theta_b;
    Ok((lp(theta_b.clone())? - 2.0 * lp(theta_a.clone())? + lp(reflected)?).exp())
}

/// The same ratio norm by pointwise quadrature of `p_a² / p_b`.
pub fn l2_ratio_direct(body: &ConvexBody, theta_a: &DVector<f64>, theta_b: &DVector<f64>) -> Result<f64> {
    quadrature_supported(body)?;
    let pa = BoltzmannParams::new(body, theta_a.clone())?;
    let pb = BoltzmannParams::new(body, theta_b.clone())?;
    let aa = log_partition(&pa)?;
    let ab = log_partition(&pb)?;
    let r = quadrature::integrate(
        body,
        1,
        |x, o| {
            // p_a² / p_b in log space; the separate densities underflow at large θ.
            let la = -dot(pa.theta.as_slice(), x) - aa;
            let lb = -dot(pb.theta.as_slice(), x) - ab;
            o[0] = (2.0 * la - lb).exp();
        },
        &QuadratureOptions::default(),
    )?;
    Ok(r[0])
}

/// `‖P_θ / P_{(1+γ)θ}‖`.
pub fn l2_ratio_norm(p: &BoltzmannParams<'_>, gamma: f64) -> Result<f64> {
    l2_ratio_between(p.body, &p.theta, &(&p.theta * (1.0 + gamma)))
}

/// `∫_K P_θ`, which should be one.
pub fn normalization(p: &BoltzmannParams<'_>) -> Result<f64> {
    quadrature_supported(p.body)?;
    let a = log_partition(p)?;
    let r = quadrature::integrate(p.body, 1, |x, o| o[0] = p.density(x, a), &QuadratureOptions::default())?;
    Ok(r[0])
}

/// `P_θ(X_axis ≤ level)`, for boxes (any dimension) and polytopes (≤ 3-D).
pub fn marginal_cdf(p: &BoltzmannParams<'_>, axis: usize, level: f64) -> Result<f64> {
    let full = log_partition(p)?;
    let cut = match p.body.truncate_axis(axis, level) {
        Ok(b) => b,
        Err(Error::InvalidInput(_)) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    let part = match log_partition(&BoltzmannParams::new(&cut, p.theta.clone())?) {
        Ok(v) => v,
        // Empty or degenerate section.
        Err(Error::Numerical(_)) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    Ok((part - full).exp().clamp(0.0, 1.0))
}

/// Smallest `C ≥ 1` such that the centered empirical second moment along each
/// eigen-direction `v` of `reference_cov` lies in `[1/C, C] · vᵀ Σ_ref v`.
pub fn check_isotropy(samples: &[DVector<f64>], reference_cov: &DMatrix<f64>) -> Result<f64> {
    let n = reference_cov.nrows();
    if samples.len() < n + 1 {
        return Err(Error::InvalidInput(format!(
            "isotropy check needs at least {} samples, got {}",
            n + 1,
            samples.len()
        )));
    }
    let (_, emp) = linalg::mean_and_covariance(samples)?;
    check_dim(n, emp.nrows())?;
    let eig = linalg::symmetrize(reference_cov).symmetric_eigen();
    let mut worst: f64 = 1.0;
    for k in 0..n {
        let lam = eig.eigenvalues[k];
        if !(lam > 0.0) {
            return Err(Error::Diagnostic("reference covariance is not positive definite".into()));
        }
        let v = eig.eigenvectors.column(k);
        let r = (v.transpose() * &emp * v)[(0, 0)] / lam;
        if !(r > 1e-12) || !r.is_finite() {
            return Err(Error::Diagnostic("sample set is rank deficient".into()));
        }
        worst = worst.max(r).max(1.0 / r);
    }
    Ok(worst)
}
