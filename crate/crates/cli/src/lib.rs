//! Command-line front end for kimura-core: configuration, reports and the
//! acceptance suite.

pub mod acceptance;
pub mod baselines;
pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use kimura_core::KimuraError;
use serde::Serialize;

use crate::baselines::Baselines;
use crate::config::*;
use crate::report::{write_atomic, write_outputs, Outcome, Report, ResolvedConfig, Versions};

pub const DEFAULT_SEED: u64 = 42;
pub const OUTPUT_DIR_ENV: &str = "KIMURA_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "kimura-out";

#[derive(Debug, Parser)]
#[command(name = "kimura", version, about = "Numerical probes for generalized Kimura diffusions")]
pub struct Cli {
    /// TOML file with a section per command; flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Where reports go [default: $KIMURA_OUTPUT_DIR, then ./kimura-out]
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cap on worker threads
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sampled doubling dimension of a constant-weight corner measure
    Doubling(DoublingFlags),
    /// First positive root zeta1 of the weighted Bessel-type function
    Bessel(BesselFlags),
    /// One-dimensional Poincare bound against the discrete eigenvalue
    Poincare(PoincareFlags),
    /// Discrete interval spectrum against the exact Jacobi eigenvalues
    Spectrum(SpectrumFlags),
    /// Heat-kernel checks and envelope fits on the interval
    Heat(HeatFlags),
    /// Harnack ratios, Hoelder exponent and norm blow-up
    Harnack(HarnackFlags),
    /// Constants of the singular-potential inequality under refinement
    Singular(SingularFlags),
    /// Weyl counting-function fit
    Weyl(WeylFlags),
    /// Monte Carlo stationary law against the Beta density
    Stationary(StationaryFlags),
    /// Log-series expansion of the stationary density near a face
    Series(SeriesFlags),
    /// Simulate the Wright-Fisher SDE on a simplex
    Simulate(SimulateFlags),
    /// Run the acceptance suite
    Accept(AcceptFlags),
}

/// Settings shared by every command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Context {
    pub seed: u64,
    pub jobs: Option<usize>,
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Core(KimuraError),
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => e.fmt(f),
            RunError::Core(e) => e.fmt(f),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<KimuraError> for RunError {
    fn from(e: KimuraError) -> Self {
        RunError::Core(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Core(
                KimuraError::Domain(_) | KimuraError::Config(_) | KimuraError::Unsupported(_) | KimuraError::StepSize(_),
            ) => 2,
            _ => 1,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok((report, path)) => {
            let verdict = match report.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "REPORT",
            };
            println!("{}: {verdict} -> {}", report.command, path.display());
            if report.pass == Some(false) {
                1
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn resolve_output_dir(flag: Option<PathBuf>, file: Option<PathBuf>) -> PathBuf {
    flag.or(file)
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

/// Runs a parsed command line and writes its artifacts.
pub fn execute(cli: Cli) -> Result<(Report, PathBuf), RunError> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let ctx = Context {
        seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        jobs: cli.jobs.or(file.jobs),
    };
    if let Some(j) = ctx.jobs {
        if j == 0 {
            return Err(ConfigError::Value("jobs must be positive".into()).into());
        }
        // the pool can only be configured once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let output_dir = resolve_output_dir(cli.output_dir, file.output_dir.clone());

    macro_rules! dispatch {
        ($name:literal, $flags:expr, $params:ty, $f:path) => {{
            let params: $params = file.resolve($name, $flags)?;
            let outcome = $f(&params, &ctx)?;
            ($name, serialize(&params), outcome)
        }};
    }
    let (name, params, outcome) = match &cli.command {
        Command::Doubling(f) => dispatch!("doubling", f, DoublingParams, commands::doubling),
        Command::Bessel(f) => dispatch!("bessel", f, BesselParams, commands::bessel),
        Command::Poincare(f) => dispatch!("poincare", f, PoincareParams, commands::poincare),
        Command::Spectrum(f) => dispatch!("spectrum", f, SpectrumParams, commands::spectrum),
        Command::Heat(f) => dispatch!("heat", f, HeatParams, commands::heat),
        Command::Harnack(f) => dispatch!("harnack", f, HarnackParams, commands::harnack),
        Command::Singular(f) => dispatch!("singular", f, SingularParams, commands::singular),
        Command::Weyl(f) => dispatch!("weyl", f, WeylParams, commands::weyl),
        Command::Stationary(f) => dispatch!("stationary", f, StationaryParams, commands::stationary),
        Command::Series(f) => dispatch!("series", f, SeriesParams, commands::series),
        Command::Simulate(f) => dispatch!("simulate", f, SimulateParams, commands::simulate_command),
        Command::Accept(f) => {
            let params: AcceptParams = file.resolve("accept", f)?;
            let outcome = accept(&params)?;
            ("accept", serialize(&params), outcome)
        }
    };
    let report = Report {
        command: name.to_string(),
        config: ResolvedConfig {
            seed: ctx.seed,
            jobs: ctx.jobs,
            params,
        },
        results: outcome.results.clone(),
        pass: outcome.pass,
        baselines: outcome.baselines.clone(),
        versions: Versions::default(),
    };
    let path = write_outputs(&output_dir.join(name), &report, &outcome)?;
    Ok((report, path))
}

fn serialize<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("parameters serialize")
}

fn accept(p: &AcceptParams) -> Result<Outcome, RunError> {
    if p.suite != "primary" {
        return Err(ConfigError::Value(format!("unknown suite '{}', the only suite is 'primary'", p.suite)).into());
    }
    if let Some(bad) = p.only.iter().find(|id| !(1..=10).contains(*id)) {
        return Err(ConfigError::Value(format!("no criterion {bad}; ids run from 1 to 10")).into());
    }
    let baselines = if p.baselines.is_empty() {
        Baselines::builtin()
    } else {
        Baselines::load(Path::new(&p.baselines)).map_err(ConfigError::Value)?
    };
    let results = acceptance::run_suite(&p.only, &baselines, |r| println!("{}", r.line()));
    let checks: Vec<_> = results.iter().flat_map(|r| r.baselines.iter().cloned()).collect();
    if !p.write_baselines.is_empty() {
        let mut text = serde_json::to_string_pretty(&baselines.record(&checks)).expect("baselines serialize");
        text.push('\n');
        write_atomic(Path::new(&p.write_baselines), text.as_bytes())?;
    }
    let pass = results.iter().all(|r| r.pass);
    let mut out = Outcome::new(serde_json::json!({ "criteria": results }), Some(pass));
    out.baselines = checks;
    Ok(out)
}
