//! Hit-and-Run targeting `P_θ` restricted to a body.
//!
//! Each step draws a direction `u = Σ^{1/2} z`, intersects the line with the
//! body and resamples the position exactly from the restricted density,
//! which along the chord is a truncated exponential.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::distr::Open01;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::bodies::{ConvexBody, TOL_CHORD};
use crate::boltzmann::BoltzmannParams;
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::rng::stream_rng;
use crate::TRACE_VERSION;

/// Fresh directions tried before a step gives up.
pub const MAX_DIRECTION_RETRIES: u32 = 16;

/// Below this `|s|·L` the chord law is treated as uniform.
const FLAT_EXPONENT: f64 = 1e-12;

/// Keeps sampled points off the chord endpoints.
const ENDPOINT_MARGIN: f64 = 1e-13;

/// One Hit-and-Run chain. Single owner; not shared between threads.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub x: DVector<f64>,
    sigma: DMatrix<f64>,
    sigma_sqrt: DMatrix<f64>,
    rng: ChaCha8Rng,
    stream: u64,
    pub steps_taken: u64,
    pub chords: u64,
    pub oracle_calls: u64,
    pub retries: u64,
}

impl ChainState {
    /// A chain at `x` with identity direction covariance.
    pub fn new(body: &ConvexBody, x: DVector<f64>, seed: u64, stream: u64) -> Result<Self> {
        check_dim(body.dim(), x.len())?;
        if !body.contains(&x)? {
            return Err(Error::Precondition("chain start is not in the body".into()));
        }
        let n = x.len();
        Ok(Self {
            x,
            sigma: DMatrix::identity(n, n),
            sigma_sqrt: DMatrix::identity(n, n),
            rng: stream_rng(seed, stream),
            stream,
            steps_taken: 0,
            chords: 0,
            oracle_calls: 0,
            retries: 0,
        })
    }

    /// Replace the direction covariance. It is regularized before use.
    pub fn set_sigma(&mut self, sigma: &DMatrix<f64>) -> Result<()> {
        check_dim(self.x.len(), sigma.nrows())?;
        check_dim(self.x.len(), sigma.ncols())?;
        let reg = linalg::regularize_covariance(sigma);
        self.sigma_sqrt = linalg::sym_sqrt(&reg)?;
        self.sigma = reg;
        Ok(())
    }

    pub fn with_sigma(mut self, sigma: &DMatrix<f64>) -> Result<Self> {
        self.set_sigma(sigma)?;
        Ok(self)
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    fn direction(&mut self) -> DVector<f64> {
        let n = self.x.len();
        let z = DVector::from_fn(n, |_, _| self.rng.sample::<f64, _>(StandardNormal));
        &self.sigma_sqrt * z
    }
}

/// Position in `[0, 1]` of a draw from the density `∝ e^{−a f}` on `[0, 1]`,
/// by inverting its CDF at `u`.
fn unit_exponential_quantile(a: f64, u: f64) -> f64 {
    if a.abs() < FLAT_EXPONENT {
        u
    } else if a > 0.0 {
        -(u * (-a).exp_m1()).ln_1p() / a
    } else {
        1.0 - unit_exponential_quantile(-a, 1.0 - u)
    }
}

/// Draw `ρ ∈ [lo, hi]` with density `∝ e^{−sρ}` using the uniform variate `u`.
pub fn sample_on_chord(s: f64, lo: f64, hi: f64, u: f64) -> f64 {
    let len = hi - lo;
    let f = unit_exponential_quantile(s * len, u).clamp(ENDPOINT_MARGIN, 1.0 - ENDPOINT_MARGIN);
    lo + f * len
}

/// CDF of the restricted law `∝ e^{−sρ}` on `[lo, hi]` at `rho`.
pub fn chord_cdf(s: f64, lo: f64, hi: f64, rho: f64) -> f64 {
    let len = hi - lo;
    let f = ((rho - lo) / len).clamp(0.0, 1.0);
    let a = s * len;
    if a.abs() < FLAT_EXPONENT {
        f
    } else if a > 0.0 {
        (-a * f).exp_m1() / (-a).exp_m1()
    } else {
        // Mirror so the exponentials stay bounded.
        1.0 - (a * (1.0 - f)).exp_m1() / a.exp_m1()
    }
}

/// Advance the chain by one Hit-and-Run step.
pub fn hit_and_run_step(state: &mut ChainState, p: &BoltzmannParams<'_>) -> Result<()> {
    check_dim(p.body.dim(), state.x.len())?;
    let mut last_problem = String::new();
    for attempt in 0..=MAX_DIRECTION_RETRIES {
        if attempt > 0 {
            state.retries += 1;
        }
        let u = state.direction();
        let chord = match p.body.chord(&state.x, &u) {
            Ok(c) => c,
            Err(e @ (Error::Precondition(_) | Error::InvalidInput(_) | Error::Numerical(_))) => {
                last_problem = e.to_string();
                continue;
            }
            Err(e) => return Err(e),
        };
        state.chords += 1;
        state.oracle_calls += chord.oracle_calls as u64;
        let scale = chord.length() * u.norm();
        if !(chord.rho_lo <= 0.0 && chord.rho_hi >= 0.0) || !(scale > TOL_CHORD * p.body.radius_bound()) {
            last_problem = format!("degenerate chord [{:e}, {:e}]", chord.rho_lo, chord.rho_hi);
            continue;
        }
        let s = p.theta.dot(&u);
        let v: f64 = state.rng.sample(Open01);
        let rho = sample_on_chord(s, chord.rho_lo, chord.rho_hi, v);
        let next = chord.point_at(rho);
        state.oracle_calls += 1;
        if !p.body.contains_raw(&next) {
            last_problem = "sampled point left the body".into();
            continue;
        }
        state.x = next;
        state.steps_taken += 1;
        return Ok(());
    }
    Err(Error::Chain(format!(
        "no usable chord after {} retries at step {}: {last_problem}",
        MAX_DIRECTION_RETRIES, state.steps_taken
    )))
}

/// Thinned record of a chain: one row every `every` steps.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub every: u64,
    pub rows: Vec<(u64, DVector<f64>)>,
}

impl Trace {
    pub fn every(k: u64) -> Self {
        Self {
            every: k.max(1),
            rows: Vec::new(),
        }
    }

    /// Column `axis` of the recorded points.
    pub fn coordinate(&self, axis: usize) -> Vec<f64> {
        self.rows.iter().map(|(_, x)| x[axis]).collect()
    }

    /// CSV with a `trace_version` column followed by `step,x1..xn`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.rows.first().map_or(0, |(_, x)| x.len());
        let mut header = String::from("trace_version,step");
        for i in 1..=n {
            header.push_str(&format!(",x{i}"));
        }
        writeln!(w, "{header}")?;
        for (step, x) in &self.rows {
            let mut line = format!("{TRACE_VERSION},{step}");
            for v in x.iter() {
                line.push_str(&format!(",{v:e}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Run `steps` sequential steps, recording into `trace` if given.
pub fn run_chain(
    state: &mut ChainState,
    p: &BoltzmannParams<'_>,
    steps: u64,
    mut trace: Option<&mut Trace>,
) -> Result<()> {
    if steps == 0 {
        return Err(Error::InvalidInput("run_chain needs at least one step".into()));
    }
    for _ in 0..steps {
        hit_and_run_step(state, p)?;
        if let Some(t) = trace.as_deref_mut() {
            if state.steps_taken % t.every == 0 {
                t.rows.push((state.steps_taken, state.x.clone()));
            }
        }
    }
    Ok(())
}

/// Advance every chain by `steps` in parallel and return the final points.
pub fn sample_batch(p: &BoltzmannParams<'_>, warm_starts: &mut [ChainState], steps: u64) -> Result<Vec<DVector<f64>>> {
    if warm_starts.is_empty() {
        return Err(Error::InvalidInput("sample_batch needs at least one warm start".into()));
    }
    warm_starts
        .par_iter_mut()
        .map(|c| run_chain(c, p, steps, None).map(|_| c.x.clone()))
        .collect()
}
