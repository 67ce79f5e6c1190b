//! `jamfield`: jammer localization experiments from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jamfield_core::config::ConfigFile;
use jamfield_core::estimators::estimate;
use jamfield_core::harness::{crb_sweep, fit_context, run_sweep, ExperimentConfig};
use jamfield_core::output::{crb_table, emit_outputs, field_csv, field_svg};
use jamfield_core::sim::{field_grid, generate_dataset};
use jamfield_core::{ExecMode, Result};

#[derive(Parser)]
#[command(
    name = "jamfield",
    version,
    about = "Jammer localization with augmented physics-based models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo INR sweep; writes results.csv and rmse_vs_inr.svg.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 1 runs sequentially.
        #[arg(long)]
        workers: Option<usize>,
        /// Fill the mean_ms column and write timings.csv.
        #[arg(long)]
        timing: bool,
    },
    /// Print the Cramér-Rao bound per INR level.
    Crb {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Render the noiseless field as a heatmap (field.svg, field.csv).
    Field {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Grid points per axis.
        #[arg(long, default_value_t = 201)]
        grid: usize,
    },
    /// Fit every configured estimator on one realization and print JSON reports.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// INR of the realization (defaults to the scenario's).
        #[arg(long)]
        inr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for learned network parameters (`<label>.mlp`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path, seed: Option<u64>, workers: Option<usize>) -> Result<ExperimentConfig> {
    let mut file = ConfigFile::load(path)?;
    if let Some(s) = seed {
        file.sweep.master_seed = s;
    }
    if workers.is_some() {
        file.sweep.workers = workers;
    }
    file.experiment()
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run {
            config,
            out,
            seed,
            workers,
            timing,
        } => {
            let mut cfg = load(&config, seed, workers)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            cfg.record_timing |= timing;
            let mode = ExecMode::for_workers(cfg.workers);
            let result = run_sweep(&cfg, mode)?;
            for path in emit_outputs(&result, &cfg.output_dir)? {
                println!("wrote {}", path.display());
            }
            for cell in &result.cells {
                println!(
                    "{:>14} inr {:>5} dB  rmse {:.4} m  converged {:.2}",
                    cell.estimator,
                    cell.inr_db,
                    cell.rmse_mean(),
                    cell.converged_frac()
                );
            }
        }
        Command::Crb { config, workers } => {
            let cfg = load(&config, None, workers)?;
            let rows = crb_sweep(&cfg, ExecMode::for_workers(cfg.workers))?;
            print!("{}", crb_table(&rows));
        }
        Command::Field { config, out, grid } => {
            let cfg = load(&config, None, None)?;
            let dir = out.unwrap_or(cfg.output_dir.clone());
            let sc = &cfg.scenario;
            let values = field_grid(sc, grid, grid, ExecMode::Parallel)?;
            let ds = generate_dataset(sc, ExecMode::Parallel)?;
            std::fs::create_dir_all(&dir)?;
            let svg = dir.join("field.svg");
            let csv = dir.join("field.csv");
            std::fs::write(&svg, field_svg(sc, grid, grid, &values, &ds.positions()))?;
            std::fs::write(&csv, field_csv(sc, grid, grid, &values))?;
            println!("wrote {}\nwrote {}", svg.display(), csv.display());
        }
        Command::Fit {
            config,
            inr,
            seed,
            out,
        } => {
            let cfg = load(&config, seed, None)?;
            let mut sc = cfg.scenario.clone();
            if let Some(i) = inr {
                sc.inr_db = i;
            }
            let ds = generate_dataset(&sc, ExecMode::Parallel)?;
            let ctx = fit_context(&sc);
            let mut reports = Vec::new();
            for spec in &cfg.estimators {
                let r = estimate(&ds, spec, &ctx)?;
                if let (Some(dir), Some(phi)) = (&out, &r.phi_hat) {
                    std::fs::create_dir_all(dir)?;
                    std::fs::write(dir.join(format!("{}.mlp", spec.label())), phi.to_text())?;
                }
                reports.push(r);
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&reports).expect("reports serialize")
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
