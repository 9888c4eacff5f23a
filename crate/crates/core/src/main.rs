#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use log::info;

use plastic_damage::io::{emit_plots, parse_config, read_ledger, run_to_dir};
use plastic_damage::sim::{rupture_step, SimulationConfig};

/// Number of worker threads for element loops; results do not depend on it.
const WORKERS_ENV: &str = "PLASTIC_DAMAGE_WORKERS";

#[derive(Parser)]
#[command(version, about = "Quasistatic plasticity with damage and healing on a 2-D fault")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation, writing the ledger and VTK snapshots.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: `output_dir` from the config, else `./out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat the run for several time steps and plot the energy balance.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated time steps, e.g. `10ks,5ks,1ks`.
        #[arg(long, value_delimiter = ',', value_parser = parse_duration)]
        taus: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat the run for several damage viscosities and report rupture times.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated values of a2 in Pa·s, e.g. `10e6,0.1e6,1e3`.
        #[arg(long, value_delimiter = ',')]
        a2: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot existing ledgers.
    Plot {
        #[arg(long, value_delimiter = ',', required = true)]
        ledgers: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parse `10ks`, `500s`, `2.5e3` (seconds when unsuffixed).
fn parse_duration(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let (number, scale) = if let Some(v) = t.strip_suffix("ks") {
        (v, 1e3)
    } else if let Some(v) = t.strip_suffix("Ms") {
        (v, 1e6)
    } else if let Some(v) = t.strip_suffix('s') {
        (v, 1.0)
    } else {
        (t, 1.0)
    };
    let v: f64 = number.trim().parse().map_err(|_| format!("invalid duration `{text}`"))?;
    if !(v > 0.0) {
        return Err(format!("duration `{text}` must be positive"));
    }
    Ok(v * scale)
}

fn output_dir(out: Option<PathBuf>, config: &SimulationConfig) -> PathBuf {
    out.or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn run_labelled(config: &SimulationConfig, dir: &Path) -> anyhow::Result<Vec<plastic_damage::sim::LedgerRow>> {
    let out = run_to_dir(config, dir).with_context(|| format!("run writing to {}", dir.display()))?;
    let last = out.ledger.last().expect("ledger has the initial row");
    println!(
        "{}: {} steps, balance residual {:.6e} J, rupture {}",
        dir.display(),
        last.step,
        last.balance_residual,
        match rupture_step(&out.ledger) {
            Some(step) => format!("at step {step}"),
            None => "none".into(),
        }
    );
    Ok(out.ledger)
}

fn init_workers() -> anyhow::Result<()> {
    let workers = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))?,
        Err(_) => 1,
    };
    rayon::ThreadPoolBuilder::new().num_threads(workers).build_global()?;
    info!("using {workers} worker thread(s)");
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let config = parse_config(&config)?;
            let dir = output_dir(out, &config);
            run_labelled(&config, &dir)?;
        }
        Command::Convergence { config, taus, out } => {
            if taus.is_empty() {
                bail!("--taus needs at least one value");
            }
            let base = parse_config(&config)?;
            let dir = output_dir(out, &base);
            let mut ledgers = Vec::new();
            for tau in taus {
                let config = SimulationConfig { tau, ..base.clone() };
                config.validate()?;
                let label = format!("tau={}ks", tau / 1e3);
                ledgers.push((label.clone(), run_labelled(&config, &dir.join(&label))?));
            }
            let summary = emit_plots(&ledgers, &dir)?;
            for (label, gap) in &summary.terminal_gaps {
                println!("{label}: terminal gap {gap:.6e} J");
            }
            println!("gaps decrease with tau: {}", summary.gaps_decreasing);
        }
        Command::Sweep { config, a2, out } => {
            if a2.is_empty() {
                bail!("--a2 needs at least one value");
            }
            let base = parse_config(&config)?;
            let dir = output_dir(out, &base);
            let mut ledgers = Vec::new();
            for a2 in a2 {
                let mut config = base.clone();
                config.material.a2 = a2;
                config.validate()?;
                let label = format!("a2={a2:e}");
                ledgers.push((label.clone(), run_labelled(&config, &dir.join(&label))?));
            }
            let summary = emit_plots(&ledgers, &dir)?;
            for (label, rupture) in &summary.ruptures {
                match rupture {
                    Some((step, t)) => println!("{label}: rupture at step {step} (t = {t:.0} s)"),
                    None => println!("{label}: no rupture"),
                }
            }
        }
        Command::Plot { ledgers, out } => {
            let ledgers = ledgers
                .iter()
                .map(|p| Ok((p.display().to_string(), read_ledger(p)?)))
                .collect::<plastic_damage::Result<Vec<_>>>()?;
            let summary = emit_plots(&ledgers, &out)?;
            println!("wrote {} and {}", summary.energy_svg.display(), summary.reaction_svg.display());
            for (label, rupture) in &summary.ruptures {
                match rupture {
                    Some((step, t)) => println!("{label}: rupture at step {step} (t = {t:.0} s)"),
                    None => println!("{label}: no rupture"),
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = init_workers().and_then(|_| execute(cli)) {
        eprintln!("error: {e:#}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
