use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flowmeter::harness::{self, ExperimentConfig, Mode, ResultTable};
use flowmeter::Error;

#[derive(Parser)]
#[command(name = "flowmeter", about = "Reproduce the flow meter experiments as CSV tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Binary detection curves, optima and sweeps
    Fig2,
    /// Multi-hypothesis detection and the large-L Chernoff design
    Fig3,
    /// Estimator MSE curves, ECR bound and optimum times
    Fig4,
    /// Error probabilities and a decision at a fixed or optimized schedule
    Detect,
    /// Velocity estimates, MSE and bounds at a fixed or optimized schedule
    Estimate,
    /// Property suite; exit code 2 when any check fails
    Validate,
}

fn configure(cli: &Cli) -> flowmeter::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    let wanted = match cli.command {
        Command::Detect => Some(Mode::Detect),
        Command::Estimate => Some(Mode::Estimate),
        _ => None,
    };
    if let (Some(mode), Some(wanted)) = (cfg.mode, wanted) {
        if mode != wanted {
            return Err(Error::Config("mode in the config file contradicts the subcommand".into()));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(tables: &[ResultTable], cfg: &ExperimentConfig) -> flowmeter::Result<()> {
    for t in tables {
        let path = t.write(&cfg.out)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn run(cli: &Cli, cfg: &ExperimentConfig) -> flowmeter::Result<bool> {
    let tables = match cli.command {
        Command::Fig2 => harness::run_fig2(cfg)?,
        Command::Fig3 => harness::run_fig3(cfg)?,
        Command::Fig4 => harness::run_fig4(cfg)?,
        Command::Detect => harness::detect(cfg)?,
        Command::Estimate => harness::estimate(cfg)?,
        Command::Validate => {
            let report = harness::run_validate(cfg)?;
            for c in &report.checks {
                eprintln!("{} {:<34} {:.3e} (tolerance {:.1e})", if c.passed { "pass" } else { "FAIL" }, c.name, c.value, c.tolerance);
            }
            write(&[report.to_table(cfg)], cfg)?;
            return Ok(report.all_passed());
        }
    };
    write(&tables, cfg)?;
    Ok(true)
}

fn main() -> ExitCode {
    // clap's own failure code is 2, which is reserved for validation
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cfg = match configure(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("flowmeter: {e}");
            return ExitCode::from(1);
        }
    };
    if cfg.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global() {
            eprintln!("flowmeter: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli, &cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("flowmeter: {e}");
            ExitCode::from(1)
        }
    }
}
