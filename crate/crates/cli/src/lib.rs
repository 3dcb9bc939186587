//! Run configuration and pipelines behind the `anneal-ipm` binary.
//!
//! A [`RunConfig`] fully determines a run. [`RunConfig::resolve`] fills every
//! default so the copy echoed into the report can be replayed as-is.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anneal_ipm::annealing::{anneal, epoch_diagnostics, schedule_for_dimension};
use anneal_ipm::equivalence::{central_path, compare_paths, heat_path, heat_path_sampled, HeatSampling};
use anneal_ipm::ipm::{
    follow_path, follow_path_sampled, Barrier, DualOptions, EntropicBarrier, FollowOptions, LogBarrier, NewtonState,
    SampledMoments, SampledMomentsConfig, DEFAULT_C, ENTROPIC_NU_FACTOR,
};
use anneal_ipm::{
    equivalence, BodySpec, ConvexBody, PathPoint, SamplerConfig, Schedule, ScheduleKind, TRACE_VERSION,
};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Anneal,
    Ipm,
    Heatpath,
    Diagnose,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Anneal => "anneal",
            Command::Ipm => "ipm",
            Command::Heatpath => "heatpath",
            Command::Diagnose => "diagnose",
        }
    }
}

/// Barrier used by `ipm`, or the central path in `heatpath`. For `heatpath`,
/// `sampled` means a sampled heat path against the entropic central path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Log,
    Entropic,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub body: BodySpec,
    pub theta: Vec<f64>,
    pub eps: f64,
    pub seed: u64,
    pub schedule: ScheduleKind,
    #[serde(default)]
    pub nu: Option<f64>,
    pub c_mix: f64,
    #[serde(default)]
    pub replicas: Option<usize>,
    #[serde(default)]
    pub steps: Option<u64>,
    #[serde(default)]
    pub t1: Option<f64>,
    pub grid: usize,
    #[serde(default)]
    pub backend: Option<Backend>,
    /// Short-step constant for `ipm`.
    pub c: f64,
    /// Output directory.
    pub out: PathBuf,
}

impl RunConfig {
    pub fn new(command: Command, body: BodySpec, theta: Vec<f64>) -> Self {
        Self {
            command,
            body,
            theta,
            eps: 1e-2,
            seed: 0,
            schedule: ScheduleKind::Entropic,
            nu: None,
            c_mix: 1.0,
            replicas: None,
            steps: None,
            t1: None,
            grid: 7,
            backend: None,
            c: DEFAULT_C,
            out: PathBuf::from("."),
        }
    }

    /// Reads a config file, or the `config` echoed inside a run report.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bad = |e: &dyn std::fmt::Display| CliError::Usage(format!("{}: {e}", path.display()));
        let text = fs::read_to_string(path).map_err(|e| bad(&e))?;
        let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(&e))?;
        if v.get("trace_version").is_some() {
            if let Some(inner) = v.get_mut("config") {
                v = inner.take();
            }
        }
        serde_json::from_value(v).map_err(|e| bad(&e))
    }

    fn validate(&self, body: &ConvexBody) -> Result<(), CliError> {
        if self.theta.len() != body.dim() {
            return Err(anneal_ipm::Error::DimensionMismatch {
                expected: body.dim(),
                got: self.theta.len(),
            }
            .into());
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Usage("theta has non-finite entries".into()));
        }
        if !(self.eps > 0.0) {
            return Err(CliError::Usage("eps must be positive".into()));
        }
        if !(self.c_mix > 0.0) {
            return Err(CliError::Usage("c_mix must be positive".into()));
        }
        if !(self.c > 0.0) {
            return Err(CliError::Usage("c must be positive".into()));
        }
        if matches!(self.nu, Some(v) if !(v > 0.0)) {
            return Err(CliError::Usage("nu must be positive".into()));
        }
        if self.command == Command::Heatpath && self.grid < 1 {
            return Err(CliError::Usage("grid must have at least one point".into()));
        }
        Ok(())
    }

    /// Copy with every default materialized for `body`.
    pub fn resolve(&self, body: &ConvexBody) -> Result<RunConfig, CliError> {
        self.validate(body)?;
        let n = body.dim();
        let mut r = self.clone();
        match self.command {
            Command::Anneal | Command::Diagnose => {
                r.backend = None;
                r.t1 = Some(self.t1.unwrap_or_else(|| body.estimate_diameter()));
                r.nu = schedule_nu(self, body);
                let s = self.sampler();
                r.replicas = Some(s.replica_count(n));
                r.steps = Some(s.mix_steps(n));
            }
            Command::Ipm => {
                let backend = self.backend.unwrap_or(Backend::Log);
                r.backend = Some(backend);
                r.t1 = None;
                r.nu = Some(match (self.nu, backend) {
                    (Some(v), _) => v,
                    (None, Backend::Log) => LogBarrier::from_body(body)?.nu(),
                    (None, Backend::Entropic) => EntropicBarrier::new(body)?.nu(),
                    (None, Backend::Sampled) => body.nu_override().unwrap_or(ENTROPIC_NU_FACTOR * n as f64),
                });
                if backend == Backend::Sampled {
                    let d = self.sampled_moments(n);
                    r.replicas = Some(d.chains);
                    r.steps = Some(d.steps);
                } else {
                    r.replicas = None;
                    r.steps = None;
                }
            }
            Command::Heatpath => {
                r.backend = Some(self.backend.unwrap_or(Backend::Entropic));
                r.t1 = Some(self.t1.unwrap_or_else(|| 2.0 * body.radius_bound()));
                r.nu = None;
                if r.backend == Some(Backend::Sampled) {
                    let d = HeatSampling::default();
                    r.steps = Some(self.steps.unwrap_or(d.steps));
                } else {
                    r.steps = None;
                }
                r.replicas = None;
            }
        }
        Ok(r)
    }

    fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            c_mix: self.c_mix,
            steps: self.steps,
            replicas: self.replicas,
            seed: self.seed,
            record_replicas: self.command == Command::Diagnose,
        }
    }

    fn sampled_moments(&self, n: usize) -> SampledMomentsConfig {
        let mut d = SampledMomentsConfig::for_dimension(n, self.seed);
        if let Some(m) = self.replicas {
            d.chains = m;
        }
        if let Some(s) = self.steps {
            d.steps = s;
        }
        d
    }
}

fn schedule_nu(cfg: &RunConfig, body: &ConvexBody) -> Option<f64> {
    let nu = cfg.nu.or(body.nu_override());
    match cfg.schedule {
        ScheduleKind::Entropic => Some(nu.unwrap_or(body.dim() as f64)),
        _ => nu,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] anneal_ipm::Error),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.kind(),
            CliError::Io(_) => "io",
        }
    }

    /// Exit status: 2 for bad input, 1 for failures during the run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(
                anneal_ipm::Error::DimensionMismatch { .. }
                | anneal_ipm::Error::InvalidInput(_)
                | anneal_ipm::Error::Unsupported(_)
                | anneal_ipm::Error::Json(_),
            ) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut err = json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Core(anneal_ipm::Error::NonConvergence { best, .. }) = self {
            err["best"] = json!(best);
        }
        json!({ "error": err })
    }
}

/// Files written by a run.
#[derive(Debug, Clone, Serialize)]
pub struct Artifacts {
    pub report: PathBuf,
    pub traces: Vec<PathBuf>,
}

pub fn run(config: &RunConfig) -> Result<Artifacts, CliError> {
    let body = config.body.build()?;
    let cfg = config.resolve(&body)?;
    fs::create_dir_all(&cfg.out)?;
    let theta = DVector::from_column_slice(&cfg.theta);
    let (result, traces) = match cfg.command {
        Command::Anneal => run_anneal(&cfg, &body, &theta, false)?,
        Command::Diagnose => run_anneal(&cfg, &body, &theta, true)?,
        Command::Ipm => run_ipm(&cfg, &body, &theta)?,
        Command::Heatpath => run_heatpath(&cfg, &body, &theta)?,
    };
    let mut written = Vec::with_capacity(traces.len());
    for (name, text) in traces {
        let path = cfg.out.join(name);
        fs::write(&path, text)?;
        written.push(path);
    }
    let report = json!({
        "trace_version": TRACE_VERSION,
        "command": cfg.command.name(),
        "config": cfg,
        "traces": written,
        "result": result,
    });
    let report_path = cfg.out.join(format!("{}_report.json", cfg.command.name()));
    fs::write(&report_path, serde_json::to_string_pretty(&report).map_err(anneal_ipm::Error::from)? + "\n")?;
    Ok(Artifacts {
        report: report_path,
        traces: written,
    })
}

type Traces = Vec<(String, String)>;

fn x_header(out: &mut String, n: usize) {
    for i in 1..=n {
        let _ = write!(out, ",x{i}");
    }
}

fn x_values(out: &mut String, x: &[f64]) {
    for v in x {
        let _ = write!(out, ",{v:e}");
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn build_schedule(cfg: &RunConfig, n: usize) -> Result<Schedule, CliError> {
    let t1 = cfg.t1.expect("resolved config has t1");
    Ok(schedule_for_dimension(cfg.schedule, n, cfg.nu, cfg.eps, t1)?)
}

fn trajectory_csv(points: &[PathPoint], n: usize) -> String {
    let mut s = String::from("trace_version,epoch,t");
    x_header(&mut s, n);
    s.push_str(",gap_bound\n");
    for (k, p) in points.iter().enumerate() {
        let _ = write!(s, "{TRACE_VERSION},{},{:e}", k + 1, p.t);
        x_values(&mut s, &p.x);
        let _ = writeln!(s, ",{}", opt(p.gap_bound));
    }
    s
}

fn run_anneal(
    cfg: &RunConfig,
    body: &ConvexBody,
    theta: &DVector<f64>,
    diagnose: bool,
) -> Result<(serde_json::Value, Traces), CliError> {
    let n = body.dim();
    let schedule = build_schedule(cfg, n)?;
    let report = anneal(body, theta, &schedule, &cfg.sampler())?;
    let mut traces = vec![("trajectory.csv".to_string(), trajectory_csv(&report.trajectory, n))];
    if !diagnose {
        return Ok((serde_json::to_value(&report).map_err(anneal_ipm::Error::from)?, traces));
    }
    let diags = epoch_diagnostics(&report, body);
    let mut s = String::from("trace_version,epoch,t,isotropy_c,mean_error,mean_error_in_se,l2_ratio_prev\n");
    for d in &diags {
        let _ = writeln!(
            s,
            "{TRACE_VERSION},{},{:e},{},{},{},{}",
            d.epoch,
            d.t,
            opt(d.isotropy_c),
            opt(d.mean_error),
            opt(d.mean_error_in_se),
            opt(d.l2_ratio_prev)
        );
    }
    traces.push(("diagnostics.csv".to_string(), s));
    // Replica clouds are only needed for the diagnostics; keep the report small.
    let mut summary = report;
    for e in &mut summary.epochs {
        e.replicas.clear();
    }
    let value = json!({ "anneal": summary, "diagnostics": diags });
    Ok((value, traces))
}

fn path_csv(states: &[NewtonState], n: usize) -> String {
    let mut s = String::from("trace_version,k,t,lambda,gap_bound");
    x_header(&mut s, n);
    s.push('\n');
    for st in states {
        let _ = write!(s, "{TRACE_VERSION},{},{:e},{:e},{}", st.k, st.t, st.decrement, opt(st.gap_bound));
        x_values(&mut s, st.x_hat.as_slice());
        s.push('\n');
    }
    s
}

fn run_ipm(cfg: &RunConfig, body: &ConvexBody, theta: &DVector<f64>) -> Result<(serde_json::Value, Traces), CliError> {
    let n = body.dim();
    let backend = cfg.backend.expect("resolved config has a backend");
    let nu = cfg.nu.expect("resolved config has nu");
    let opts = FollowOptions {
        c: cfg.c,
        ..FollowOptions::default()
    };
    let (states, extra) = match backend {
        Backend::Log => {
            let b = LogBarrier::from_body(body)?.with_nu(nu);
            (follow_path(&b, theta, cfg.eps, &opts)?, json!({}))
        }
        Backend::Entropic => {
            let b = EntropicBarrier::new(body)?.with_nu(nu);
            (follow_path(&b, theta, cfg.eps, &opts)?, json!({}))
        }
        Backend::Sampled => {
            let body = body.clone().with_nu(nu)?;
            let mut src = SampledMoments::new(&body, &cfg.sampled_moments(n))?;
            let states = follow_path_sampled(&mut src, &body, theta, cfg.eps, &opts, &DualOptions::default())?;
            let extra = json!({ "moment_estimates": src.estimates, "oracle_calls": src.oracle_calls() });
            (states, extra)
        }
    };
    let last = states.last().expect("path has a starting point");
    let max_decrement = states.iter().skip(1).map(|s| s.decrement).fold(0.0, f64::max);
    let result = json!({
        "backend": backend,
        "nu": nu,
        "steps": states.len() - 1,
        "final_t": last.t,
        "final_x": last.x_hat.as_slice(),
        "final_objective": theta.dot(&last.x_hat),
        "final_gap_bound": last.gap_bound,
        "max_decrement": max_decrement,
        "sampled": extra,
    });
    Ok((result, vec![("path.csv".to_string(), path_csv(&states, n))]))
}

fn run_heatpath(
    cfg: &RunConfig,
    body: &ConvexBody,
    theta: &DVector<f64>,
) -> Result<(serde_json::Value, Traces), CliError> {
    let n = body.dim();
    let backend = cfg.backend.expect("resolved config has a backend");
    let hi = cfg.t1.expect("resolved config has t1");
    let grid = equivalence::log_grid(hi, hi / 100.0, cfg.grid);
    let heat = match backend {
        Backend::Sampled => {
            let hs = HeatSampling {
                steps: cfg.steps.expect("resolved config has steps"),
                seed: cfg.seed,
                ..HeatSampling::default()
            };
            heat_path_sampled(body, theta, &grid, &hs)?
        }
        _ => heat_path(body, theta, &grid)?,
    };
    let central = match backend {
        Backend::Log => central_path(theta, &LogBarrier::from_body(body)?, &grid)?,
        _ => central_path(theta, &EntropicBarrier::new(body)?, &grid)?,
    };
    let cmp = compare_paths(&heat, &central)?;
    let mut s = String::from("trace_version,t,source");
    x_header(&mut s, n);
    s.push_str(",residual\n");
    for p in &heat {
        let _ = write!(s, "{TRACE_VERSION},{:e},{}", p.t, p.source);
        x_values(&mut s, &p.x);
        s.push_str(",\n");
    }
    for (p, row) in central.iter().zip(&cmp.rows) {
        let _ = write!(s, "{TRACE_VERSION},{:e},{}", p.t, p.source);
        x_values(&mut s, &p.x);
        let _ = writeln!(s, ",{:e}", row.residual);
    }
    let result = json!({
        "backend": backend,
        "grid": grid,
        "max_residual": cmp.max_residual,
        "comparison": cmp,
    });
    Ok((result, vec![("heatpath.csv".to_string(), s)]))
}
