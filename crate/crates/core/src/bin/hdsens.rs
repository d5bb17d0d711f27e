//! Command-line front end: estimation, rho bounds and simulation.

use clap::{Args, Parser, Subcommand};
use hdsens::aipw::TargetParameter;
use hdsens::cli::{cmd_bounds, cmd_estimate, cmd_simulate, AnalysisConfig};
use hdsens::error::Error;
use hdsens::sensitivity::SigmaMode;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "hdsens",
    version,
    about = "Average causal effects with high-dimensional nuisance models and sensitivity analysis to unobserved confounding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the target parameter with per-rho confidence intervals and
    /// an uncertainty interval; writes report.json, intervals.csv and plot
    /// data to the output directory.
    Estimate(EstimateArgs),
    /// Derive plausible rho ranges from outcome ordering constraints;
    /// writes boundsdata.csv and bounds.json.
    Bounds(BoundsArgs),
    /// Run a Monte Carlo coverage study from a scenario file; writes
    /// coverage.csv and coverage.txt.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML analysis configuration
    #[arg(long)]
    config: PathBuf,
    /// output directory (overrides the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// fold/reproducibility seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// propensity trim floor (overrides the config)
    #[arg(long)]
    trim: Option<f64>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// target parameter: mean_y1 | mean_y0 | mean_y1_given_t0 | mean_y0_given_t1 | ate
    #[arg(long)]
    target: Option<String>,
    /// sigma estimator: naive | corrected
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    rho_min: Option<f64>,
    #[arg(long)]
    rho_max: Option<f64>,
    #[arg(long)]
    rho1_min: Option<f64>,
    #[arg(long)]
    rho1_max: Option<f64>,
    #[arg(long)]
    rho0_min: Option<f64>,
    #[arg(long)]
    rho0_max: Option<f64>,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// rho grid resolution for the bound search
    #[arg(long)]
    grid_step: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML scenario file
    #[arg(long)]
    scenario: PathBuf,
    /// output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_target(s: &str) -> Result<TargetParameter, Error> {
    match s {
        "mean_y1" => Ok(TargetParameter::MeanY1),
        "mean_y0" => Ok(TargetParameter::MeanY0),
        "mean_y1_given_t0" => Ok(TargetParameter::MeanY1GivenT0),
        "mean_y0_given_t1" => Ok(TargetParameter::MeanY0GivenT1),
        "ate" => Ok(TargetParameter::Ate),
        other => Err(Error::Config(format!("unknown target {other:?}"))),
    }
}

fn parse_sigma(s: &str) -> Result<SigmaMode, Error> {
    match s {
        "naive" => Ok(SigmaMode::Naive),
        "corrected" => Ok(SigmaMode::Corrected),
        other => Err(Error::Config(format!("unknown sigma mode {other:?}"))),
    }
}

fn load_config(common: &CommonArgs) -> Result<AnalysisConfig, Error> {
    let mut config = AnalysisConfig::load(&common.config)?;
    let ov = hdsens::cli::Overrides {
        out_dir: common.out.clone(),
        seed: common.seed,
        trim: common.trim,
        ..Default::default()
    };
    config.apply(&ov)?;
    Ok(config)
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Estimate(args) => {
            let mut config = load_config(&args.common)?;
            let ov = hdsens::cli::Overrides {
                target: args.target.as_deref().map(parse_target).transpose()?,
                sigma: args.sigma.as_deref().map(parse_sigma).transpose()?,
                alpha: args.alpha,
                grid_size: args.grid_size,
                rho_min: args.rho_min,
                rho_max: args.rho_max,
                rho1_min: args.rho1_min,
                rho1_max: args.rho1_max,
                rho0_min: args.rho0_min,
                rho0_max: args.rho0_max,
                ..Default::default()
            };
            config.apply(&ov)?;
            let report = cmd_estimate(&config)?;
            match &report.result {
                hdsens::cli::TargetReport::Single(r) => {
                    println!(
                        "{:?}: point (rho=0) {:.4}, 95% CI [{:.4}, {:.4}], UI [{:.4}, {:.4}]",
                        report.target,
                        r.unconfounded.point,
                        r.unconfounded.ci_lower,
                        r.unconfounded.ci_upper,
                        r.ui_lower,
                        r.ui_upper
                    );
                }
                hdsens::cli::TargetReport::Ate(r) => {
                    println!(
                        "ATE: point (rho=0) {:.4}, CI [{:.4}, {:.4}], UI [{:.4}, {:.4}]",
                        r.unconfounded.point,
                        r.unconfounded.ci_lower,
                        r.unconfounded.ci_upper,
                        r.ui_lower,
                        r.ui_upper
                    );
                }
            }
            println!("report written to {}", config.output.dir.join("report.json").display());
            Ok(())
        }
        Command::Bounds(args) => {
            let mut config = load_config(&args.common)?;
            let ov = hdsens::cli::Overrides { bounds_step: args.grid_step, ..Default::default() };
            config.apply(&ov)?;
            let report = cmd_bounds(&config)?;
            let show = |name: &str, r: Option<(f64, f64)>| match r {
                Some((lo, hi)) => println!("{name} plausible range: [{lo:.2}, {hi:.2}]"),
                None => println!("{name} plausible range: EMPTY (no grid point satisfies the ordering)"),
            };
            show("rho1", report.rho1_range);
            show("rho0", report.rho0_range);
            Ok(())
        }
        Command::Simulate(args) => {
            let table = cmd_simulate(&args.scenario, &args.out)?;
            print!("{}", table.render_text());
            println!("coverage table written to {}", args.out.join("coverage.csv").display());
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
