#![allow(dead_code)]

use anneal_ipm::ConvexBody;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `[−1,1]ⁿ` intersected with `cuts` random halfspaces `aᵀx ≤ b`,
/// `‖a‖ = 1`, `b ∈ [0.3, 0.9]`, so the origin stays interior.
pub fn random_cut_cube(n: usize, cuts: usize, seed: u64) -> ConvexBody {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = 2 * n + cuts;
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    for i in 0..n {
        a[(2 * i, i)] = 1.0;
        a[(2 * i + 1, i)] = -1.0;
        b[2 * i] = 1.0;
        b[2 * i + 1] = 1.0;
    }
    for k in 0..cuts {
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g = &g / g.norm();
        a.row_mut(2 * n + k).copy_from(&g.transpose());
        b[2 * n + k] = rng.random_range(0.3..0.9);
    }
    ConvexBody::hpolytope(a, b, DVector::zeros(n), (n as f64).sqrt()).unwrap()
}

pub fn random_objective(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    &g / g.norm()
}

/// LP optimum `min cᵀx` over `{Ax ≤ b}` by trying every n-subset of
/// constraints as active. Written independently of the library.
pub fn lp_min_by_enumeration(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> f64 {
    let (m, n) = a.shape();
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let sub = DMatrix::from_fn(n, n, |i, j| a[(idx[i], j)]);
        let rhs = DVector::from_fn(n, |i, _| b[idx[i]]);
        if let Some(x) = sub.clone().lu().solve(&rhs) {
            let resid = (&sub * &x - &rhs).amax();
            if resid < 1e-9 && (a * &x - b).max() <= 1e-9 {
                best = best.min(c.dot(&x));
            }
        }
        // Next combination in lexicographic order.
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < m - n + i {
                idx[i] += 1;
                for j in i + 1..n {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// `A(θ) = log((1 − e^{−θ})/θ)` on `[0, 1]`, written out directly.
pub fn unit_interval_log_partition(theta: f64) -> f64 {
    if theta.abs() < 1e-8 {
        -theta / 2.0
    } else if theta > 0.0 {
        (-(-theta).exp_m1() / theta).ln()
    } else {
        (theta.abs().exp_m1() / theta.abs()).ln()
    }
}

/// Entropic barrier on `[0, 1]` by a direct 1-D Newton solve of
/// `sup_θ −θx − A(θ)` using finite-difference derivatives of `A`.
pub fn unit_interval_entropic(x: f64) -> (f64, f64) {
    let a = unit_interval_log_partition;
    let h = 1e-4;
    let mut th = 0.0f64;
    for _ in 0..200 {
        let d1 = (a(th + h) - a(th - h)) / (2.0 * h);
        let d2 = (a(th + h) - 2.0 * a(th) + a(th - h)) / (h * h);
        // Ψ′(θ) = −x − A′(θ), Ψ″ = −A″.
        let step = (-x - d1) / d2;
        th += step;
        if step.abs() < 1e-13 {
            break;
        }
    }
    (-th * x - a(th), th)
}
