use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use svfkit::config::{parse_grid, parse_sweep, GridShape, RunOptions, Scenario, SweepSpec};
use svfkit::dp::FailureCharge;
use svfkit::run::run;
use svfkit::svf::{SweepCriterion, SweepStrategy};
use svfkit::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "svfkit", version, about = "Safe value function scenarios on gridded systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its CSV fields and JSON report.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// parsimonious, degenerate, positive-proxy, negative-proxy, shelf or cmdp
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
    /// Flat TOML file with run settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    penalty: Option<f64>,
    /// Penalty candidates as lo:hi[:step].
    #[arg(long, value_parser = parse_sweep_arg)]
    sweep: Option<SweepSpec>,
    /// linear or bisect
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<SweepStrategy>,
    /// zeroth-order, separation or definition
    #[arg(long, value_parser = parse_criterion)]
    criterion: Option<SweepCriterion>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Node counts, e.g. 401x301.
    #[arg(long, value_parser = parse_grid_arg)]
    grid: Option<GridShape>,
    /// Number of evenly spaced controls.
    #[arg(long)]
    controls: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    substeps: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// once or persistent
    #[arg(long, value_parser = parse_charge)]
    charge: Option<FailureCharge>,
    /// Threshold for the recovered kernel mask.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// 41x31 satellite grid.
    #[arg(long, conflicts_with = "grid")]
    coarse: bool,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_sweep_arg(s: &str) -> Result<SweepSpec, String> {
    parse_sweep(s).map_err(|e| e.to_string())
}

fn parse_grid_arg(s: &str) -> Result<GridShape, String> {
    parse_grid(s).map_err(|e| e.to_string())
}

fn parse_charge(s: &str) -> Result<FailureCharge, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_strategy(s: &str) -> Result<SweepStrategy, String> {
    match s {
        "linear" => Ok(SweepStrategy::Linear),
        "bisect" => Ok(SweepStrategy::Bisect),
        _ => Err(format!("unknown strategy '{s}' (linear or bisect)")),
    }
}

fn parse_criterion(s: &str) -> Result<SweepCriterion, String> {
    match s {
        "zeroth-order" => Ok(SweepCriterion::ZerothOrder),
        "separation" => Ok(SweepCriterion::Separation),
        "definition" => Ok(SweepCriterion::Definition),
        _ => Err(format!("unknown criterion '{s}' (zeroth-order, separation or definition)")),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Parse(_) => EXIT_CONFIG,
        _ => 1,
    }
}

fn execute(args: RunArgs) -> Result<bool, Error> {
    let file = match &args.config {
        Some(path) => RunOptions::from_toml_str(&std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.display()))
        })?)?,
        None => RunOptions::default(),
    };
    let flags = RunOptions {
        scenario: args.scenario,
        grid: if args.coarse { Some(GridShape(vec![41, 31])) } else { args.grid },
        controls: args.controls,
        dt: args.dt,
        substeps: args.substeps,
        gamma: args.gamma,
        penalty: args.penalty,
        sweep: args.sweep,
        strategy: args.strategy,
        criterion: args.criterion,
        alpha: args.alpha,
        tol: args.tol,
        max_iter: args.max_iter,
        charge: args.charge,
        out: args.out,
        ..Default::default()
    };
    let cfg = file.merge(flags).resolve()?;
    let output = run(&cfg)?;
    output.write_to(&cfg.out)?;
    eprintln!("wrote {} files to {}", output.files.len(), cfg.out.display());
    Ok(output.converged)
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| {
        let code = if e.use_stderr() { i32::from(EXIT_CONFIG) } else { 0 };
        let _ = e.print();
        std::process::exit(code);
    });
    match cli.command {
        Command::Run(args) => match execute(args) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => {
                eprintln!("value iteration did not converge; see report.json");
                ExitCode::from(EXIT_NOT_CONVERGED)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code(&e))
            }
        },
    }
}
