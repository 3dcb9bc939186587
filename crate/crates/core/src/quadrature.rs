//! Deterministic integration over low-dimensional bodies.
//!
//! Integrals are iterated one coordinate at a time with adaptive
//! Gauss–Kronrod (7/15) rules. Polytopes are split at the projections of
//! their section vertices so every panel integrand is smooth; balls and
//! oracle bodies are integrated in polar coordinates around an interior
//! point, with the radial extent taken from the chord.

use nalgebra::{DMatrix, DVector};

use crate::bodies::{polytope_vertices, ConvexBody};
use crate::error::{Error, Result};

/// Largest dimension handled by quadrature.
pub const MAX_QUADRATURE_DIM: usize = 3;

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    /// Relative tolerance on the Kronrod–Gauss error estimate, per component.
    pub rel_tol: f64,
    /// Panels allowed per one-dimensional adaptive pass.
    pub max_panels: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_panels: 400,
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
    abs: Vec<f64>,
}

fn gk15<G: FnMut(f64, &mut [f64])>(g: &mut G, a: f64, b: f64, m: usize, buf: &mut [f64]) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = vec![0.0; m];
    let mut gauss = vec![0.0; m];
    let mut abs = vec![0.0; m];
    let mut accumulate = |x: f64, wk: f64, wg: f64, g: &mut G, buf: &mut [f64]| {
        buf.iter_mut().for_each(|v| *v = 0.0);
        g(x, buf);
        for i in 0..m {
            kron[i] += wk * buf[i];
            gauss[i] += wg * buf[i];
            abs[i] += wk * buf[i].abs();
        }
    };
    accumulate(c, WGK[7], WG[3], g, buf);
    for j in 0..7 {
        let wg = if j % 2 == 1 { WG[j / 2] } else { 0.0 };
        let dx = h * XGK[j];
        accumulate(c - dx, WGK[j], wg, g, buf);
        accumulate(c + dx, WGK[j], wg, g, buf);
    }
    let value: Vec<f64> = kron.iter().map(|k| k * h).collect();
    let error = kron
        .iter()
        .zip(&gauss)
        .map(|(k, q)| ((k - q) * h).abs())
        .collect();
    let abs = abs.iter().map(|v| v * h.abs()).collect();
    Panel { a, b, value, error, abs }
}

/// Adaptive integration of `g: ℝ → ℝ^m` over `[breaks[0], breaks[last]]`,
/// with the given interior breakpoints as initial panel boundaries.
pub fn adaptive_gk<G: FnMut(f64, &mut [f64])>(
    mut g: G,
    breaks: &[f64],
    m: usize,
    opts: &QuadratureOptions,
) -> Vec<f64> {
    let mut buf = vec![0.0; m];
    let mut panels: Vec<Panel> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| gk15(&mut g, w[0], w[1], m, &mut buf))
        .collect();
    if panels.is_empty() {
        return vec![0.0; m];
    }
    let mut total = vec![0.0; m];
    loop {
        total.iter_mut().for_each(|v| *v = 0.0);
        let mut err = vec![0.0; m];
        let mut abs = vec![0.0; m];
        for p in &panels {
            for i in 0..m {
                total[i] += p.value[i];
                err[i] += p.error[i];
                abs[i] += p.abs[i];
            }
        }
        let peak = total.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let tol: Vec<f64> = (0..m)
            .map(|i| {
                let reference = total[i].abs().max(1e-6 * peak);
                (opts.rel_tol * reference)
                    .max(50.0 * f64::EPSILON * abs[i])
                    .max(f64::MIN_POSITIVE)
            })
            .collect();
        if (0..m).all(|i| err[i] <= tol[i]) || panels.len() >= opts.max_panels {
            return total;
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .map(|(k, p)| (k, (0..m).map(|i| p.error[i] / tol[i]).sum::<f64>()))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            // Panel can no longer be split in floating point; keep it.
            panels.push(p);
            return panels.iter().fold(vec![0.0; m], |mut acc, p| {
                acc.iter_mut().zip(&p.value).for_each(|(a, v)| *a += v);
                acc
            });
        }
        panels.push(gk15(&mut g, p.a, mid, m, &mut buf));
        panels.push(gk15(&mut g, mid, p.b, m, &mut buf));
    }
}

enum Scheme<'a> {
    Box { lo: &'a DVector<f64>, hi: &'a DVector<f64> },
    Halfspaces { a: &'a DMatrix<f64>, b: &'a DVector<f64> },
    Radial { center: DVector<f64>, body: &'a ConvexBody, fixed_radius: Option<f64> },
}

/// Integrates `f: K → ℝ^m`. `f` receives the point and a zeroed output slice.
pub fn integrate<F>(body: &ConvexBody, m: usize, f: F, opts: &QuadratureOptions) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = body.dim();
    if n > MAX_QUADRATURE_DIM {
        return Err(Error::Unsupported(format!(
            "quadrature is limited to {MAX_QUADRATURE_DIM} dimensions (got {n})"
        )));
    }
    let scheme = if let Some((lo, hi)) = body.box_bounds() {
        Scheme::Box { lo, hi }
    } else if let Some((a, b)) = body.halfspaces() {
        Scheme::Halfspaces { a, b }
    } else if let Some((center, radius)) = body.ball_geometry() {
        Scheme::Radial {
            center: center.clone(),
            body,
            fixed_radius: Some(radius),
        }
    } else {
        Scheme::Radial {
            center: body.interior_point().clone(),
            body,
            fixed_radius: None,
        }
    };
    let job = Job { f: &f, m, n, opts, scheme };
    match &job.scheme {
        Scheme::Radial { .. } => job.radial(),
        _ => Ok(job.section(&[])),
    }
}

struct Job<'a, F> {
    f: &'a F,
    m: usize,
    n: usize,
    opts: &'a QuadratureOptions,
    scheme: Scheme<'a>,
}

impl<F: Fn(&[f64], &mut [f64])> Job<'_, F> {
    /// Breakpoints of coordinate `prefix.len()` over the section fixed by `prefix`.
    fn breakpoints(&self, prefix: &[f64]) -> Vec<f64> {
        let k = prefix.len();
        match &self.scheme {
            Scheme::Box { lo, hi } => vec![lo[k], hi[k]],
            Scheme::Halfspaces { a, b } => section_breakpoints(a, b, prefix),
            Scheme::Radial { .. } => unreachable!("radial scheme has no sections"),
        }
    }

    fn section(&self, prefix: &[f64]) -> Vec<f64> {
        let breaks = self.breakpoints(prefix);
        if breaks.len() < 2 {
            return vec![0.0; self.m];
        }
        let last = prefix.len() + 1 == self.n;
        let mut point = prefix.to_vec();
        point.push(0.0);
        adaptive_gk(
            |x, out| {
                let k = point.len() - 1;
                point[k] = x;
                if last {
                    (self.f)(&point, out);
                } else {
                    out.copy_from_slice(&self.section(&point));
                }
            },
            &breaks,
            self.m,
            self.opts,
        )
    }

    fn radial(&self) -> Result<Vec<f64>> {
        let Scheme::Radial { center, body, fixed_radius } = &self.scheme else {
            unreachable!()
        };
        let n = self.n;
        let extent = |u: &DVector<f64>| -> Result<f64> {
            match fixed_radius {
                Some(r) => Ok(*r),
                None => Ok(body.chord(center, u)?.rho_hi.max(0.0)),
            }
        };
        let mut failure: Option<Error> = None;
        let ray = |u: DVector<f64>, out: &mut [f64], failure: &mut Option<Error>| {
            let r = match extent(&u) {
                Ok(r) => r,
                Err(e) => {
                    failure.get_or_insert(e);
                    return;
                }
            };
            let mut point = vec![0.0; n];
            let res = adaptive_gk(
                |s, o| {
                    for i in 0..n {
                        point[i] = center[i] + s * u[i];
                    }
                    (self.f)(&point, o);
                    let jac = s.powi(n as i32 - 1);
                    o.iter_mut().for_each(|v| *v *= jac);
                },
                &[0.0, r],
                self.m,
                self.opts,
            );
            out.copy_from_slice(&res);
        };
        let two_pi = 2.0 * std::f64::consts::PI;
        let quarter: Vec<f64> = (0..=4).map(|i| i as f64 * two_pi / 4.0).collect();
        let result = match n {
            1 => {
                let mut a = vec![0.0; self.m];
                let mut b = vec![0.0; self.m];
                ray(DVector::from_element(1, 1.0), &mut a, &mut failure);
                ray(DVector::from_element(1, -1.0), &mut b, &mut failure);
                a.iter().zip(&b).map(|(x, y)| x + y).collect()
            }
            2 => adaptive_gk(
                |phi, out| ray(DVector::from_vec(vec![phi.cos(), phi.sin()]), out, &mut failure),
                &quarter,
                self.m,
                self.opts,
            ),
            _ => {
                let halves = [0.0, 0.5 * std::f64::consts::PI, std::f64::consts::PI];
                adaptive_gk(
                    |psi, out| {
                        let (sp, cp) = psi.sin_cos();
                        let inner = adaptive_gk(
                            |phi, o| {
                                ray(
                                    DVector::from_vec(vec![sp * phi.cos(), sp * phi.sin(), cp]),
                                    o,
                                    &mut failure,
                                )
                            },
                            &quarter,
                            self.m,
                            self.opts,
                        );
                        for (o, v) in out.iter_mut().zip(inner) {
                            *o = v * sp;
                        }
                    },
                    &halves,
                    self.m,
                    self.opts,
                )
            }
        };
        match failure {
            Some(e) => Err(e),
            None => Ok(result),
        }
    }
}

/// Sorted breakpoints for coordinate `k = prefix.len()` of `{A x ≤ b}` with
/// the first `k` coordinates fixed. Empty when the section is empty.
fn section_breakpoints(a: &DMatrix<f64>, b: &DVector<f64>, prefix: &[f64]) -> Vec<f64> {
    let (rows, n) = a.shape();
    let k = prefix.len();
    let d = n - k;
    let mut rhs = b.clone();
    for i in 0..rows {
        for (j, p) in prefix.iter().enumerate() {
            rhs[i] -= a[(i, j)] * p;
        }
    }
    let scale = b.amax().max(1.0);
    if d == 1 {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for i in 0..rows {
            let c = a[(i, k)];
            if c > 0.0 {
                hi = hi.min(rhs[i] / c);
            } else if c < 0.0 {
                lo = lo.max(rhs[i] / c);
            } else if rhs[i] < -1e-12 * scale {
                return Vec::new();
            }
        }
        return if lo < hi && lo.is_finite() && hi.is_finite() {
            vec![lo, hi]
        } else {
            Vec::new()
        };
    }
    let sub = a.columns(k, d).into_owned();
    let verts = polytope_vertices(&sub, &rhs);
    let mut xs: Vec<f64> = verts.iter().map(|v| v[0]).collect();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    xs.dedup_by(|p, q| (*p - *q).abs() <= 1e-12 * scale);
    if xs.len() < 2 {
        return Vec::new();
    }
    xs
}
