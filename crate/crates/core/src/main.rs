use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use disagg::experiment::{
    cmd_attendance, cmd_consistency, cmd_estimate, cmd_pde_check, cmd_simulate, cmd_strategies,
    EstimateInputs, ExperimentConfig,
};
use disagg::Error;

#[derive(Parser)]
#[command(
    name = "disagg",
    version,
    about = "Disaggregate traffic counts by journey type"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `output_dir` in the configuration, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Attendance tables at the counters and on a dense grid.
    Attendance(Common),
    /// Simulated counts for the configured number of days.
    Simulate(Common),
    /// EM estimates and confidence ellipsoids.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Counts CSV to estimate from (requires --table).
        #[arg(long, requires = "table")]
        counts: Option<PathBuf>,
        /// Attendance CSV matching the counters in --counts.
        #[arg(long, requires = "counts")]
        table: Option<PathBuf>,
    },
    /// Estimation error as the number of counters grows.
    Consistency(Common),
    /// Confidence ellipsoids for each counter-placement strategy.
    Strategies(Common),
    /// Finite-difference residuals of the transport equation.
    PdeCheck(Common),
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<String, Error> {
    match cli.command {
        Command::Attendance(c) => {
            let (cfg, out) = load(&c)?;
            let r = cmd_attendance(&cfg, &out)?;
            Ok(format!(
                "attendance for {} journeys at {} counters",
                cfg.journeys.len(),
                r.counters.len()
            ))
        }
        Command::Simulate(c) => {
            let (cfg, out) = load(&c)?;
            let r = cmd_simulate(&cfg, &out)?;
            let total: u64 = r.days.iter().map(|d| d.total()).sum();
            Ok(format!("{} days, {total} counts", r.days.len()))
        }
        Command::Estimate {
            common,
            counts,
            table,
        } => {
            let (cfg, out) = load(&common)?;
            let inputs = counts
                .zip(table)
                .map(|(counts, table)| EstimateInputs { counts, table });
            let r = cmd_estimate(&cfg, inputs.as_ref(), &out)?;
            let mut s = format!(
                "{} estimates, coverage {:.3}",
                r.estimates.len(),
                r.coverage
            );
            if let Some(e) = r.estimates.first() {
                s.push_str(&format!("\nfirst: {:?}", e.nu));
            }
            Ok(s)
        }
        Command::Consistency(c) => {
            let (cfg, out) = load(&c)?;
            let r = cmd_consistency(&cfg, &out)?;
            Ok(format!(
                "pooled RMSE vs 1/sqrt(J): R^2 = {:.4}",
                r.pooled_r_squared
            ))
        }
        Command::Strategies(c) => {
            let (cfg, out) = load(&c)?;
            let r = cmd_strategies(&cfg, &out)?;
            Ok(format!(
                "ranking (smallest ellipsoid first): {}",
                r.ranking.join(", ")
            ))
        }
        Command::PdeCheck(c) => {
            let (cfg, out) = load(&c)?;
            let rows = cmd_pde_check(&cfg, &out)?;
            let worst = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
            Ok(format!("{} residuals, largest {worst:.3e}", rows.len()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
