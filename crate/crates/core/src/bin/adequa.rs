//! Command-line front end: batch simulations, property suites and deviation
//! experiments.
//!
//! Exit codes: 0 on success, 1 when a property suite fails or a run errors,
//! 2 when the configuration is invalid.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use adequa::baselines::{deviation_experiment, paired_deviation, ActiveRounds, Deviation, DeviationReport, Stage};
use adequa::harness::{build_policies, load_config, property_suite, run_experiment, HarnessError, PolicySpec, SUITES};

#[derive(Parser)]
#[command(name = "adequa", version, about = "Decentralized queuing simulations")]
struct Cli {
    /// Added to every configured seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a JSON experiment and write its artifacts.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's `output` entry.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a randomized property suite.
    Check {
        /// birkhoff, phi, sync, counterexample or all.
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 500)]
        budget: u64,
    },
    /// Compare compliant runs against runs where one queue plays a fixed
    /// distribution over servers.
    Deviate {
        #[arg(long)]
        config: PathBuf,
        /// 0-based deviating queue.
        #[arg(long)]
        queue: usize,
        /// Comma-separated probabilities, one per server.
        #[arg(long, value_delimiter = ',')]
        dist: Vec<f64>,
        /// Deviate only during the paired stage of the counterexample schedule.
        #[arg(long)]
        stage1_only: bool,
        /// Number of final windows averaged in the reported difference.
        #[arg(long, default_value_t = 10)]
        last: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fail(err: HarnessError) -> ExitCode {
    eprintln!("error: {err}");
    match err {
        HarnessError::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out } => simulate(config, out, cli.seed_offset),
        Command::Check { suite, budget } => check(&suite, budget),
        Command::Deviate { config, queue, dist, stage1_only, last, out } => {
            deviate(config, queue, dist, stage1_only, last, out, cli.seed_offset)
        }
    };
    result.unwrap_or_else(fail)
}

fn simulate(config: PathBuf, out: Option<PathBuf>, offset: u64) -> Result<ExitCode, HarnessError> {
    let mut cfg = load_config(&config)?;
    cfg.seeds.iter_mut().for_each(|s| *s += offset);
    let out = out.or_else(|| cfg.output.clone());
    let summary = run_experiment(&cfg, out.as_deref())?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(dir) = out {
        eprintln!("artifacts written to {}", dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn check(suite: &str, budget: u64) -> Result<ExitCode, HarnessError> {
    let names: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite] };
    let mut ok = true;
    for name in names {
        let report = property_suite(name, budget)?;
        let status = if report.passed() { "PASS" } else { "FAIL" };
        println!("{status} {name}: {} cases, max error {:.3e}", report.cases, report.max_error);
        for f in &report.failures {
            println!("  {f}");
        }
        ok &= report.passed();
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn deviate(
    config: PathBuf,
    queue: usize,
    dist: Vec<f64>,
    stage1_only: bool,
    last: usize,
    out: Option<PathBuf>,
    offset: u64,
) -> Result<ExitCode, HarnessError> {
    let mut cfg = load_config(&config)?;
    cfg.seeds.iter_mut().for_each(|s| *s += offset);
    let report: DeviationReport = match (cfg.counterexample(), &cfg.policies[0]) {
        (Some(ce), PolicySpec::Counterexample) => {
            let deviation = Deviation { queue, dist, stage1_only };
            deviation_experiment(&ce, &deviation, cfg.horizon, &cfg.seeds)?
        }
        _ => {
            let active: Option<ActiveRounds> = match (stage1_only, cfg.counterexample()) {
                (true, Some(ce)) => Some(Arc::new(move |t| ce.stage(t) == Stage::Paired)),
                _ => None,
            };
            let boundaries: Vec<u64> = (1..63).map(|k| (1u64 << (k + 1)) - 2).collect();
            let factory = |seed: u64| build_policies(&cfg, seed);
            paired_deviation(&cfg.params, &factory, queue, &dist, active, cfg.horizon, &cfg.seeds, &boundaries)?
        }
    };

    println!("window end mean_difference");
    for w in &report.windows {
        println!("{} {} {:.3}", w.window, w.end, w.mean_difference());
    }
    let (mean, se) = report.tail_difference(last);
    println!("last {last} windows: deviant - compliant = {mean:.3} (se {se:.3})");
    if let Some(dir) = out {
        let path = dir.join("deviation.csv");
        std::fs::create_dir_all(&dir).map_err(|source| HarnessError::Io { path: dir.clone(), source })?;
        let mut csv = csv::Writer::from_path(&path)?;
        csv.write_record(["window", "end", "seed", "compliant", "deviant"])?;
        for w in &report.windows {
            for (s, seed) in report.seeds.iter().enumerate() {
                csv.serialize((w.window, w.end, seed, w.compliant[s], w.deviant[s]))?;
            }
        }
        csv.flush().map_err(|source| HarnessError::Io { path, source })?;
    }
    Ok(ExitCode::SUCCESS)
}
