//! Thin command-line front end over the experiment library. Each
//! subcommand loads a config (defaults when absent), applies flag
//! overrides, runs one experiment family, and writes the report files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use redemption_market::experiments::{
    runner, ExperimentConfig, ExperimentReport,
};

#[derive(Parser)]
#[command(name = "redemption-market")]
#[command(about = "Seeded market experiments for data-retention pricing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file; defaults apply for every key left unset.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,

    /// Monte Carlo replications override.
    #[arg(long)]
    runs: Option<usize>,

    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Oversupply strategy override: major|minor|prop|random.
    #[arg(long)]
    strategy: Option<String>,

    /// Informed-ratio grid override, comma-separated.
    #[arg(long)]
    rho: Option<String>,

    /// Noise grid override, comma-separated.
    #[arg(long)]
    sigma: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Welfare comparison across mechanisms and informed ratios.
    Compare(Common),
    /// Personalized pricing under estimation noise vs the quotation.
    Robustness(Common),
    /// Round counts across price-step and population-size grids.
    Convergence(Common),
    /// The four oversupply strategies on matched populations.
    Oversupply(Common),
    /// One-at-a-time parameter sweep (set sweep_axis/sweep_values).
    Sweep(Common),
    /// Run a single quotation and export its trade ledger.
    Ledger(Common),
}

fn load_config(common: &Common) -> redemption_market::Result<ExperimentConfig> {
    let (mut cfg, warnings) = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            ExperimentConfig::parse(&text)?
        }
        None => (ExperimentConfig::default(), vec!["no config file, all defaults".to_string()]),
    };
    for w in &warnings {
        eprintln!("config: {w}");
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(runs) = common.runs {
        cfg.runs = Some(runs);
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(strategy) = &common.strategy {
        cfg.strategy = strategy.parse()?;
    }
    if let Some(rho) = &common.rho {
        cfg.rho = parse_list(rho)?;
    }
    if let Some(sigma) = &common.sigma {
        cfg.sigma = parse_list(sigma)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_list(s: &str) -> redemption_market::Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim().parse::<f64>().map_err(|_| {
                redemption_market::Error::Config(format!("bad number '{p}' in list"))
            })
        })
        .collect()
}

fn finish(cfg: &ExperimentConfig, report: ExperimentReport) -> redemption_market::Result<()> {
    let files = report.write_to(&cfg.out)?;
    let summary = report.summary_json();
    if let Some(cells) = summary["cells"].as_array() {
        for cell in cells {
            println!(
                "{:<40} n={:<6} welfare={:.1} ± {:.1}",
                cell["cell"].as_str().unwrap_or("?"),
                cell["n"],
                cell["metrics"]["welfare"]["mean"].as_f64().unwrap_or(f64::NAN),
                cell["metrics"]["welfare"]["ci95"].as_f64().unwrap_or(f64::NAN),
            );
        }
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn run() -> redemption_market::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Compare(c) => {
            let cfg = load_config(c)?;
            finish(&cfg, runner::run_comparison(&cfg)?)
        }
        Command::Robustness(c) => {
            let cfg = load_config(c)?;
            finish(&cfg, runner::run_robustness(&cfg)?)
        }
        Command::Convergence(c) => {
            let cfg = load_config(c)?;
            finish(&cfg, runner::run_convergence(&cfg)?)
        }
        Command::Oversupply(c) => {
            let cfg = load_config(c)?;
            finish(&cfg, runner::run_oversupply(&cfg)?)
        }
        Command::Sweep(c) => {
            let cfg = load_config(c)?;
            finish(&cfg, runner::run_sweep(&cfg)?)
        }
        Command::Ledger(c) => {
            let cfg = load_config(c)?;
            let (_, state) = runner::single_ledger(&cfg)?;
            std::fs::create_dir_all(&cfg.out)?;
            let path = cfg.out.join("ledger.csv");
            std::fs::write(&path, state.ledger_csv())?;
            println!(
                "rounds={} trades={} sold={} fulfillment={:.3}",
                state.round,
                state.ledger.len(),
                state.total_sold,
                state.fulfillment()
            );
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
