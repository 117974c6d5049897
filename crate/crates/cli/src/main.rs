mod commands;
mod config;
mod expr;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};
use serde_json::json;

use config::*;
use manifest::Outputs;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    MissingFlag(&'static str),
    Core(twophase::Error),
    Io(std::io::Error),
    NotConverged(String),
}

impl From<twophase::Error> for CliError {
    fn from(e: twophase::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use twophase::Error as E;
        match self {
            CliError::Usage(_) | CliError::MissingFlag(_) => 2,
            CliError::Core(E::Config(_) | E::PerturbationTooLarge(_) | E::Inadmissible(_)) => 2,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) | CliError::MissingFlag(_) => "usage",
            CliError::Core(_) if self.exit_code() == 2 => "invalid_input",
            CliError::Core(_) => "numerical",
            CliError::Io(_) => "io",
            CliError::NotConverged(_) => "not_converged",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::NotConverged(m) => m.clone(),
            CliError::MissingFlag(f) => format!("missing required flag {f}"),
            CliError::Core(e) => e.to_string(),
            CliError::Io(e) => e.to_string(),
        }
    }
}

const RADIAL_HELP: &str = "\
Artifacts:
  base.csv    r,phase,value,derivative (the interface radius appears once per phase)
  modes.csv   k,s_prime_at_one,condition,flagged
  report.json boundary flux, Lambda, interface derivatives, invertibility table";

const COUNTEREXAMPLE_HELP: &str = "\
Artifacts:
  report.json  converged flag, residual history, Jacobian diagonal, g and f coefficients
  residuals.csv evaluation,residual,nodal
  f_modes.csv  k,cos,sin";

const HEATSIM_HELP: &str = "\
Artifacts:
  flux.csv      t,d,spread (boundary or interface flux; spread is max - min over points)
  interface.csv x,y,t,value (Cauchy problems)
  balance.csv   point and time resolved balance moments on 8 points (Dirichlet problems)
  report.json   step counts, extrema, spreads and interface limits";

const ASYMPTOTICS_HELP: &str = "\
Artifacts:
  content.csv t,content_small,content_large,rescaled_ratio
  report.json extrapolated ratio, curvature target, relative error, flag";

const LAPLACE_HELP: &str = "\
Artifacts:
  flux_asymptotics.csv lambda,d0,fitted_constant,target
  report.json          fit coefficients and residuals; lambda_0 and sandwich checks";

const GEOMETRY_HELP: &str = "\
Artifacts:
  curvature.csv  param,kappa_sum,pi,weingarten
  weingarten.csv param,c,flagged
  report.json    range and relative variation of the fitted C(p)";

#[derive(Parser)]
#[command(name = "twophase", version, about = "Numerical experiments for two-phase heat conductors")]
struct Cli {
    /// TOML file with one section per subcommand; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for artifacts and manifest.json
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Base radial solution, Fourier modes and the invertibility table
    #[command(after_help = RADIAL_HELP)]
    Radial(RadialOpts),
    /// Newton solve for the core perturbation matching an outer perturbation
    #[command(after_help = COUNTEREXAMPLE_HELP)]
    Counterexample(CounterexampleOpts),
    /// Heat flow simulation with flux, interface and balance diagnostics
    #[command(after_help = HEATSIM_HELP)]
    Heatsim(HeatsimOpts),
    /// Heat content of two tangent balls and their rescaled ratio
    #[command(after_help = ASYMPTOTICS_HELP)]
    Asymptotics(AsymptoticsOpts),
    /// Laplace-transformed problem: boundary flux asymptotics and barriers
    #[command(after_help = LAPLACE_HELP)]
    Laplace(LaplaceOpts),
    /// Curvature table and moment-expansion fits on a closed curve
    #[command(after_help = GEOMETRY_HELP)]
    Geometry(GeometryOpts),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Radial(_) => "radial",
            Command::Counterexample(_) => "counterexample",
            Command::Heatsim(_) => "heatsim",
            Command::Asymptotics(_) => "asymptotics",
            Command::Laplace(_) => "laplace",
            Command::Geometry(_) => "geometry",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let dir = cli
        .out
        .or(file.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("twophase-out"));

    macro_rules! dispatch {
        ($name:literal, $flags:expr, $section:ident, $defaults:path, $run:path) => {{
            let opts = $flags.overlay(file.$section.unwrap_or_default()).overlay($defaults());
            let mut out = Outputs::create(&dir)?;
            let info = $run(&opts, &mut out)?;
            out.finish($name, serde_json::to_value(&opts).expect("options serialize"), info.grid, info.tolerances)?;
        }};
    }

    match cli.command {
        Command::Radial(f) => dispatch!("radial", f, radial, commands::radial_defaults, commands::radial),
        Command::Counterexample(f) => dispatch!(
            "counterexample",
            f,
            counterexample,
            commands::counterexample_defaults,
            commands::counterexample
        ),
        Command::Heatsim(f) => dispatch!("heatsim", f, heatsim, commands::heatsim_defaults, commands::heatsim),
        Command::Asymptotics(f) => dispatch!(
            "asymptotics",
            f,
            asymptotics,
            commands::asymptotics_defaults,
            commands::asymptotics
        ),
        Command::Laplace(f) => dispatch!("laplace", f, laplace, commands::laplace_defaults, commands::laplace),
        Command::Geometry(f) => dispatch!("geometry", f, geometry, commands::geometry_defaults, commands::geometry),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::MissingFlag(flag)) => {
            let mut cmd = Cli::command();
            cmd.build();
            let sub = cmd.find_subcommand_mut(name).expect("subcommand exists");
            sub.error(
                ErrorKind::MissingRequiredArgument,
                format!("the following required arguments were not provided:\n  {flag} <VALUE>"),
            )
            .exit()
        }
        Err(e) => {
            let report = json!({ "error": e.kind(), "message": e.message(), "exit_code": e.exit_code() });
            eprintln!("{report}");
            ExitCode::from(e.exit_code())
        }
    }
}
