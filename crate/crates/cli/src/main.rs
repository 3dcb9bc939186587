use std::path::PathBuf;
use std::process::ExitCode;

use anneal_ipm::{BodySpec, ScheduleKind};
use anneal_ipm_cli::{run, Backend, CliError, Command, RunConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "anneal-ipm", version, about = "Simulated annealing and interior-point path following")]
struct Cli {
    /// Run a saved config (as echoed in a report) instead of a subcommand.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Print the resolved config as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Anneal with hit-and-run down a temperature schedule.
    Anneal(RunArgs),
    /// Short-step path following with a log, entropic or sampled barrier.
    Ipm(RunArgs),
    /// Heat path next to a central path on a temperature grid.
    Heatpath(RunArgs),
    /// Anneal and report per-epoch isotropy, mean and schedule diagnostics.
    Diagnose(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BodyArg {
    Box,
    Ball,
    Simplex,
    Hpoly,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Classic,
    Entropic,
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Log,
    Entropic,
    Sampled,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    body: BodyArg,
    /// Box lower corner; a single value is repeated `n` times.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lo: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    hi: Vec<f64>,
    /// Ball center; the origin if omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    center: Vec<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    /// H-polytope JSON file (`n`, `A`, `b`, optional `x0`, `R`).
    #[arg(long)]
    file: Option<PathBuf>,
    /// Objective direction, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    theta: Vec<f64>,
    #[arg(long, default_value_t = 1e-2)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "entropic")]
    schedule: ScheduleArg,
    /// Shrink factor for `--schedule custom`.
    #[arg(long)]
    shrink: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    c_mix: f64,
    #[arg(long)]
    replicas: Option<usize>,
    /// Hit-and-run steps per epoch (default `ceil(c_mix·n³)`).
    #[arg(long)]
    steps: Option<u64>,
    /// Starting temperature (anneal) or top of the grid (heatpath).
    #[arg(long)]
    t1: Option<f64>,
    /// Number of temperatures for `heatpath`.
    #[arg(long, default_value_t = 7)]
    grid: usize,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Short-step constant for `ipm`.
    #[arg(long, default_value_t = 0.05)]
    c: f64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn broadcast(name: &str, v: Vec<f64>, n: Option<usize>) -> Result<Vec<f64>, CliError> {
    match (v.len(), n) {
        (0, _) => Err(CliError::Usage(format!("--{name} is required for this body"))),
        (1, Some(n)) => Ok(vec![v[0]; n]),
        (len, Some(n)) if len != n => Err(CliError::Usage(format!("--{name} has {len} entries but --n is {n}"))),
        _ => Ok(v),
    }
}

fn body_spec(a: &RunArgs) -> Result<BodySpec, CliError> {
    Ok(match a.body {
        BodyArg::Box => BodySpec::Box {
            lo: broadcast("lo", a.lo.clone(), a.n)?,
            hi: broadcast("hi", a.hi.clone(), a.n)?,
        },
        BodyArg::Ball => {
            let center = match (a.center.is_empty(), a.n) {
                (true, Some(n)) => vec![0.0; n],
                (true, None) => return Err(CliError::Usage("ball needs --center or --n".into())),
                (false, _) => broadcast("center", a.center.clone(), a.n)?,
            };
            BodySpec::Ball {
                center,
                radius: a.radius.unwrap_or(1.0),
            }
        }
        BodyArg::Simplex => BodySpec::Simplex {
            n: a.n.ok_or_else(|| CliError::Usage("simplex needs --n".into()))?,
        },
        BodyArg::Hpoly => BodySpec::Hpoly {
            file: a.file.clone().ok_or_else(|| CliError::Usage("hpoly needs --file".into()))?,
        },
    })
}

fn config_from(command: Command, a: RunArgs) -> Result<RunConfig, CliError> {
    let schedule = match (a.schedule, a.shrink) {
        (ScheduleArg::Classic, _) => ScheduleKind::Classic,
        (ScheduleArg::Entropic, _) => ScheduleKind::Entropic,
        (ScheduleArg::Custom, Some(shrink)) => ScheduleKind::Custom { shrink },
        (ScheduleArg::Custom, None) => return Err(CliError::Usage("--schedule custom needs --shrink".into())),
    };
    let mut cfg = RunConfig::new(command, body_spec(&a)?, a.theta);
    cfg.eps = a.eps;
    cfg.seed = a.seed;
    cfg.schedule = schedule;
    cfg.nu = a.nu;
    cfg.c_mix = a.c_mix;
    cfg.replicas = a.replicas;
    cfg.steps = a.steps;
    cfg.t1 = a.t1;
    cfg.grid = a.grid;
    cfg.backend = a.backend.map(|b| match b {
        BackendArg::Log => Backend::Log,
        BackendArg::Entropic => Backend::Entropic,
        BackendArg::Sampled => Backend::Sampled,
    });
    cfg.c = a.c;
    cfg.out = a.out;
    Ok(cfg)
}

fn set_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("ANNEAL_IPM_THREADS") else {
        return Ok(());
    };
    let k: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&k| k > 0)
        .ok_or_else(|| CliError::Usage(format!("ANNEAL_IPM_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(k)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    set_threads()?;
    let cfg = match (cli.config, cli.command) {
        (Some(_), Some(_)) => return Err(CliError::Usage("--config cannot be combined with a subcommand".into())),
        (Some(path), None) => RunConfig::load(&path)?,
        (None, Some(Cmd::Anneal(a))) => config_from(Command::Anneal, a)?,
        (None, Some(Cmd::Ipm(a))) => config_from(Command::Ipm, a)?,
        (None, Some(Cmd::Heatpath(a))) => config_from(Command::Heatpath, a)?,
        (None, Some(Cmd::Diagnose(a))) => config_from(Command::Diagnose, a)?,
        (None, None) => return Err(CliError::Usage("a subcommand or --config is required".into())),
    };
    if cli.print_config {
        let body = cfg.body.build()?;
        let resolved = cfg.resolve(&body)?;
        println!("{}", serde_json::to_string_pretty(&resolved).map_err(anneal_ipm::Error::from)?);
        return Ok(());
    }
    let artifacts = run(&cfg)?;
    println!("{}", serde_json::to_string(&artifacts).map_err(anneal_ipm::Error::from)?);
    Ok(())
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return fail(&CliError::Usage(e.to_string().trim().to_string()));
        }
    };
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
