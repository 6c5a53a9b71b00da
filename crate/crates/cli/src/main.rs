//! `esmda`: runs ES-MDA twin experiments described by a TOML file.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use esmda::experiment::{format_plan, plan_only, run_experiment, ExperimentConfig};
use esmda::Error;

/// Runs ES-MDA twin experiments and writes reports, schedules and norm tables.
#[derive(Debug, Parser)]
#[command(name = "esmda", version, about)]
struct Args {
    /// Experiment configuration (TOML).
    config: PathBuf,

    /// Directory for all artifacts.
    #[arg(short, long, default_value = "esmda-out")]
    out: PathBuf,

    /// Print the planned inflation schedules and alpha* without assimilating.
    #[arg(long)]
    plan_only: bool,

    /// Master seeds, overriding the config (comma separated).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,

    /// Only report errors.
    #[arg(short, long)]
    quiet: bool,
}

const EXIT_CONFIG: u8 = 2;

fn run(args: &Args) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seeds) = &args.seeds {
        cfg.seeds = seeds.clone();
        cfg.validate()?;
    }
    if args.plan_only {
        let plan = plan_only(&cfg)?;
        print!("{}", format_plan(&plan));
        return Ok(());
    }
    let summary = run_experiment(&cfg, &args.out)
        .with_context(|| format!("experiment failed; partial outputs in {}", args.out.display()))?;
    if !args.quiet {
        println!("{:<6} {:<12} {:>4} {:>14} {:>14}", "seed", "label", "N_a", "data_mismatch", "model_change");
        for r in &summary.reports {
            println!(
                "{:<6} {:<12} {:>4} {:>14.4} {:>14.4}",
                r.seed,
                r.label,
                r.schedule.n_a(),
                r.final_metrics.data_mismatch_mean,
                r.final_metrics.model_change_mean
            );
        }
        println!("artifacts written to {}", args.out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = if args.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let is_config = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Config { .. } | Error::Parse { .. })));
            ExitCode::from(if is_config { EXIT_CONFIG } else { 1 })
        }
    }
}
