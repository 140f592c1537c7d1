//! The `hfcl` experiment runner.
//!
//! Runs one training protocol (cl, fl, fl-active-only, hfcl, hfcl-sdt)
//! over an IDX dataset and writes a CSV metrics file, or sweeps one knob
//! (L, B, snr_db) across seeds and writes an aggregated table.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use hfcl_cli::config::{ConfigOverlay, Mode, ModelPreset};
use hfcl_cli::runner::run_experiment_to_file;
use hfcl_cli::sweep::{parse_seeds, render_table, sweep, SweepSpec};
use hfcl_cli::{metrics, CliError};

#[derive(Parser, Debug)]
#[command(name = "hfcl", version, about = "Hybrid federated/centralized training simulator")]
struct Cli {
    /// Optional flat `key = value` config file; flags override its keys.
    config: Option<PathBuf>,

    /// Training protocol: cl | fl | fl-active-only | hfcl | hfcl-sdt.
    #[arg(long)]
    mode: Option<Mode>,

    /// Client count K.
    #[arg(long)]
    clients: Option<usize>,

    /// Passive client count L (clients 1..=L upload data, the rest gradients).
    #[arg(long)]
    passive: Option<usize>,

    /// Communication rounds T.
    #[arg(long)]
    rounds: Option<usize>,

    /// Gradient quantization bits B (1..=32).
    #[arg(long)]
    bits: Option<u32>,

    /// Gradient-transmission SNR in dB ("inf" disables channel noise).
    #[arg(long = "snr-db")]
    snr_db: Option<f64>,

    /// Learning rate.
    #[arg(long)]
    eta: Option<f64>,

    /// Mini-batches per local step (default: derived from batch size).
    #[arg(long)]
    minibatches: Option<usize>,

    /// Mini-batch size used when --minibatches is not given.
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,

    /// Model preset: desk-mlp | paper-cnn-count.
    #[arg(long)]
    model: Option<ModelPreset>,

    /// IDX image file.
    #[arg(long)]
    images: Option<PathBuf>,

    /// IDX label file.
    #[arg(long)]
    labels: Option<PathBuf>,

    /// 2x2 average-pool inputs before training (desk default: true).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    downsample: Option<bool>,

    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Output path (metrics CSV, or the aggregated sweep table).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Sweep one knob: VAR=v1,v2,... with VAR one of L, B, snr_db.
    #[arg(long)]
    sweep: Option<String>,

    /// Seeds for the sweep cross product: s1,s2,...
    #[arg(long)]
    seeds: Option<String>,
}

fn overlay_from_flags(cli: &Cli) -> ConfigOverlay {
    ConfigOverlay {
        mode: cli.mode,
        clients: cli.clients,
        passive: cli.passive,
        rounds: cli.rounds,
        bits: cli.bits,
        snr_db: cli.snr_db,
        eta: cli.eta,
        minibatches: cli.minibatches,
        batch_size: cli.batch_size,
        model: cli.model,
        images: cli.images.clone(),
        labels: cli.labels.clone(),
        downsample: cli.downsample,
        seed: cli.seed,
        out: cli.out.clone(),
        sweep: cli.sweep.clone(),
        seeds: cli.seeds.clone(),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let base = match &cli.config {
        Some(path) => ConfigOverlay::from_file(path)?,
        None => ConfigOverlay::default(),
    };
    let overlay = base.merged_with(overlay_from_flags(&cli));
    let sweep_arg = overlay.sweep.clone();
    let seeds_arg = overlay.seeds.clone();
    let config = overlay.resolve()?;

    match sweep_arg {
        Some(spec_text) => {
            let spec: SweepSpec = spec_text.parse().map_err(CliError::Config)?;
            let seeds = match seeds_arg {
                Some(s) => parse_seeds(&s).map_err(CliError::Config)?,
                None => vec![config.seed],
            };
            let table = sweep(&config, &spec, &seeds)?;
            metrics::write_atomic(&config.out, &render_table(&table))?;
            for row in &table.rows {
                println!(
                    "{}={}: accuracy {:.2} +/- {:.2} % over {} seed(s)",
                    table.var.as_str(),
                    row.value,
                    row.mean_val_acc_pct,
                    row.std_val_acc_pct,
                    row.n_seeds
                );
            }
            println!("sweep table written to {}", config.out.display());
        }
        None => {
            let summary = run_experiment_to_file(&config)?;
            match (summary.footer.final_val_acc_pct, summary.footer.final_train_loss) {
                (Some(acc), Some(loss)) => println!(
                    "{}: {} rounds, final accuracy {acc:.2} %, final loss {loss:.6}, {} symbols ({} blocks) -> {}",
                    config.mode,
                    config.rounds,
                    summary.footer.formula_symbols,
                    summary.footer.formula_blocks,
                    config.out.display()
                ),
                _ => println!(
                    "{}: accounting only, {} symbols ({} blocks) -> {}",
                    config.mode,
                    summary.footer.formula_symbols,
                    summary.footer.formula_blocks,
                    config.out.display()
                ),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
