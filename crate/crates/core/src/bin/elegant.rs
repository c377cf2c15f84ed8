//! Command-line entry point; every command is a thin call into `elegant::experiment`.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 configuration error,
//! 3 data error, 4 no test set certified (or the single certification abstained).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use elegant::attack::StructureAttacker;
use elegant::experiment::{self, EtaSpec, Overrides, RunConfig, SweepAxis};
use elegant::fairness::BiasMetric;
use elegant::gnn::Backbone;

const EXIT_ABSTAIN: u8 = 4;

#[derive(Parser)]
#[command(
    name = "elegant",
    version,
    about = "Certified group fairness for graph neural networks"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; flags take precedence over its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, env = "ELEGANT_SEED", global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    backbone: Option<Backbone>,
    /// Bias metric: sp (statistical parity) or eo (equal opportunity).
    #[arg(long, global = true)]
    metric: Option<BiasMetric>,
    /// Absolute bias threshold.
    #[arg(long, global = true, conflicts_with = "eta_mult")]
    eta: Option<f64>,
    /// Threshold as a multiple of the vanilla model's bias.
    #[arg(long, global = true)]
    eta_mult: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the vanilla and noise-augmented models and report clean metrics.
    Train,
    /// Certify the whole test pool once.
    Certify,
    /// Certification rate over sampled test sets.
    Fcr,
    /// Certification rate along a sigma or beta grid.
    Sweep {
        #[arg(long, value_parser = parse_axis)]
        axis: Option<SweepAxis>,
        /// Comma-separated parameter values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Comma-separated budget thresholds.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
    },
    /// Evaluate both models under the attack grid.
    Attack {
        #[arg(long, value_parser = parse_attacker)]
        attacker: Option<StructureAttacker>,
    },
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    match s {
        "sigma" => Ok(SweepAxis::Sigma),
        "beta" => Ok(SweepAxis::Beta),
        other => Err(format!("unknown axis {other:?}, expected sigma or beta")),
    }
}

fn parse_attacker(s: &str) -> Result<StructureAttacker, String> {
    match s {
        "random" => Ok(StructureAttacker::Random),
        "greedy" => Ok(StructureAttacker::Greedy),
        other => Err(format!(
            "unknown attacker {other:?}, expected random or greedy"
        )),
    }
}

fn resolve(common: &Common) -> elegant::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let eta = match (common.eta, common.eta_mult) {
        (Some(v), _) => Some(EtaSpec::Absolute(v)),
        (None, Some(m)) => Some(EtaSpec::Relative(m)),
        (None, None) => None,
    };
    cfg.apply(&Overrides {
        seed: common.seed,
        jobs: common.jobs,
        out: common.out.clone(),
        backbone: common.backbone,
        metric: common.metric,
        eta,
    });
    Ok(cfg)
}

fn run(cli: Cli) -> elegant::Result<u8> {
    let mut cfg = resolve(&cli.common)?;
    match cli.command {
        Command::Train => {
            let r = experiment::run_train(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&r.json)?);
        }
        Command::Certify => {
            let r = experiment::run_certify(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&r.to_json())?);
            if !r.is_certified() {
                return Ok(EXIT_ABSTAIN);
            }
        }
        Command::Fcr => {
            let r = experiment::run_fcr(&cfg)?;
            let summary: serde_json::Map<_, _> = r
                .json
                .as_object()
                .expect("report is an object")
                .iter()
                .filter(|(k, _)| !matches!(k.as_str(), "config" | "conventions" | "runs"))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if r.fcr() == 0.0 {
                return Ok(EXIT_ABSTAIN);
            }
        }
        Command::Sweep {
            axis,
            values,
            thresholds,
        } => {
            if let Some(a) = axis {
                cfg.sweep.axis = a;
            }
            if let Some(v) = values {
                cfg.sweep.values = v;
            }
            if let Some(t) = thresholds {
                cfg.sweep.thresholds = t;
            }
            let rows = experiment::run_sweep(&cfg)?;
            println!(
                "{} rows written to {}",
                rows.len(),
                cfg.out.join(experiment::SWEEP_FILE).display()
            );
        }
        Command::Attack { attacker } => {
            if let Some(a) = attacker {
                cfg.attack.attacker = a;
            }
            let rows = experiment::run_attack(&cfg)?;
            println!(
                "{} rows written to {}",
                rows.len(),
                cfg.out.join(experiment::ATTACK_FILE).display()
            );
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
