//! The `orb` command-line pipeline: stamps in, feature functions, EOF bases,
//! predictor tables, lasso models, evaluation reports and permutation tests
//! out. Every stage writes a manifest under `<output_dir>/manifests/`.

pub mod config;
pub mod error;
pub mod manifest;
pub mod stages;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use orb_core::features::Statistic;
use orb_core::synth::Scenario;

pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "orb", version, about = "Cyclone structure features and rapid-change classification")]
pub struct Cli {
    /// Worker threads for stage-internal parallelism (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract ORB functions from every stamp (resumable).
    Extract(ConfigArg),
    /// Fit per-basin EOF bases and project every stamp.
    Basis(ConfigArg),
    /// Filter the sample and build the predictor tables.
    Assemble(ConfigArg),
    /// Fit a cross-validated logistic lasso per predictor set.
    Fit(ConfigArg),
    /// Evaluate fitted models on the test split.
    Eval(ConfigArg),
    /// Permutation tests of ORB-only and SHIPS+ORB against SHIPS-only.
    Test(ConfigArg),
    /// Write one storm's coefficient trajectory.
    Trajectory {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        storm: String,
        #[arg(long, default_value = "SIZE")]
        statistic: Statistic,
        /// Target roughness of the smoothed trace, in raw sd per hour².
        #[arg(long, default_value_t = 0.2)]
        roughness: f64,
    },
    /// Generate a synthetic input set with a ready-to-run config.
    Synth {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long, default_value_t = 40)]
        storms: usize,
        #[arg(long)]
        seed: u64,
        /// Directory to write stamps, track, SHIPS table, truth and config.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, clap::Args)]
pub struct ConfigArg {
    /// Run configuration (JSON).
    #[arg(long, short)]
    pub config: PathBuf,
}

/// Runs one subcommand and returns the line printed on success.
pub fn run(cli: Cli) -> Result<String> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Validation("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Validation(format!("--jobs: {e}")))?;
    }
    let load = |c: &ConfigArg| RunConfig::load(&c.config);
    Ok(match &cli.command {
        Command::Extract(c) => {
            let s = stages::extract(&load(c)?)?;
            format!(
                "extracted {} stamps ({} new, {} reused, {} failed)",
                s.stamps, s.extracted, s.reused, s.failed
            )
        }
        Command::Basis(c) => format!("projected {} stamps", stages::basis(&load(c)?)?),
        Command::Assemble(c) => {
            let kept = stages::assemble_sets(&load(c)?)?;
            let parts: Vec<String> = kept.iter().map(|(s, n)| format!("{} {n}", s.as_str())).collect();
            format!("rows: {}", parts.join(", "))
        }
        Command::Fit(c) => {
            let models = stages::fit(&load(c)?)?;
            let parts: Vec<String> = models
                .iter()
                .map(|(s, m)| format!("{} lambda {:.4e}", s.as_str(), m.lambda))
                .collect();
            format!("fitted {}", parts.join(", "))
        }
        Command::Eval(c) => {
            let reps = stages::eval(&load(c)?)?;
            let parts: Vec<String> = reps
                .iter()
                .map(|(s, r)| format!("{} AUC {:.3} [{:.3}, {:.3}]", s.as_str(), r.report.auc, r.report.ci.lower, r.report.ci.upper))
                .collect();
            parts.join("\n")
        }
        Command::Test(c) => {
            let r = stages::test(&load(c)?)?;
            format!(
                "test1 p = {} (T = {:.4})\ntest2 p = {} (T = {:.4})\npermutations {}",
                r.test1.p_value, r.test1.statistic, r.test2.p_value, r.test2.statistic, r.test2.rounds
            )
        }
        Command::Trajectory {
            config,
            storm,
            statistic,
            roughness,
        } => {
            let t = stages::trajectory(&load(config)?, storm, *statistic, *roughness)?;
            let periods: Vec<String> = t
                .periods_hours
                .iter()
                .map(|p| p.map_or("none".into(), |h| format!("{h:.1} h")))
                .collect();
            format!("{} points written to {}; dominant periods {}", t.points, t.csv.display(), periods.join(", "))
        }
        Command::Synth {
            scenario,
            storms,
            seed,
            out,
        } => {
            let s = stages::synth(out, *scenario, *storms, *seed)?;
            match s.config {
                Some(c) => format!("{} stamps; config at {}", s.stamps, c.display()),
                None => format!("table written to {}", out.join("table.csv").display()),
            }
        }
    })
}
