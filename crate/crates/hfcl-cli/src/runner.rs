//! Experiment execution: dataset preparation, protocol dispatch, and
//! metrics emission with exact formula-vs-ledger reconciliation.

use hfcl::channel::ChannelConfig;
use hfcl::data::{self, Sample, Shard};
use hfcl::federation::{self, ClientRoster, TrainOutcome};
use hfcl::nn::{Loss, ModelSpec, TrainingConfig};
use hfcl::{accounting, blocks};

use crate::config::{ExperimentConfig, Mode, ModelPreset, DESK_TRAIN_SAMPLES, DESK_VAL_SAMPLES};
use crate::metrics::{self, Footer, MetricsRow};
use crate::CliError;

/// Everything a finished run exposes to callers and tests.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub rows: Vec<MetricsRow>,
    pub footer: Footer,
    /// Final parameter vector (training runs only).
    pub theta: Option<Vec<f64>>,
    /// The full metrics file contents.
    pub rendered: String,
}

/// The training shards plus the held-out validation split.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub shards: Vec<Shard>,
    pub validation: Vec<Sample>,
    pub input_dim: usize,
}

/// Loads the IDX pair, optionally 2x2-average-pools it, then takes a
/// seeded disjoint train/validation subsample (desk sizes 1,000/500 when
/// the file is big enough, a 2:1 split otherwise) and shards the
/// training part IID across the clients.
pub fn prepare_data(config: &ExperimentConfig) -> Result<PreparedData, CliError> {
    let mut samples = data::load_idx(&config.images, &config.labels)?;
    if config.downsample {
        samples = samples
            .iter()
            .map(Sample::downsample_half)
            .collect::<Result<Vec<_>, _>>()?;
    }
    let n = samples.len();
    if n < 2 {
        return Err(CliError::Config(format!("dataset has only {n} samples")));
    }
    let (train_n, val_n) = if n >= DESK_TRAIN_SAMPLES + DESK_VAL_SAMPLES {
        (DESK_TRAIN_SAMPLES, DESK_VAL_SAMPLES)
    } else {
        let train = (2 * n / 3).max(1);
        (train, n - train)
    };
    let (train, validation) = data::split_train_validation(&samples, train_n, val_n, config.seed)?;

    let input_dim = train[0].rows() * train[0].cols();
    let shards = data::partition_iid(&train, config.clients, config.seed)?;
    Ok(PreparedData {
        shards,
        validation,
        input_dim,
    })
}

fn model_spec(config: &ExperimentConfig, input_dim: usize) -> Result<ModelSpec, CliError> {
    match config.model {
        ModelPreset::DeskMlp => Ok(ModelSpec::mlp(&[input_dim, 32, 10])?),
        ModelPreset::PaperCnnCount => Ok(ModelSpec::reference_cnn_count()),
    }
}

/// Closed-form overhead for the configured mode. For sequential data
/// transmission the passive term counts only the blocks that fit into
/// the round budget, which equals the full shard cost whenever
/// `rounds >= ceil(shard / P)`.
pub fn formula_symbols(config: &ExperimentConfig, p: u64, shards: &[Shard]) -> Result<u64, CliError> {
    let rounds = config.rounds as u64;
    let clients = config.clients;
    let passive = config.passive;
    let value = match config.mode {
        Mode::Cl => accounting::overhead_cl(shards.iter().map(Shard::symbol_count).sum()),
        Mode::Fl => accounting::overhead_fl(rounds, p, clients as u64)?,
        Mode::FlActiveOnly => accounting::overhead_fl(rounds, p, (clients - passive) as u64)?,
        Mode::Hfcl => {
            let passive_symbols: Vec<u64> = shards[..passive].iter().map(Shard::symbol_count).collect();
            accounting::overhead_hfcl(rounds, p, clients, &passive_symbols)?
        }
        Mode::HfclSdt => {
            let mut passive_symbols = Vec::with_capacity(passive);
            for shard in &shards[..passive] {
                let sent = (config.rounds * p as usize).min(shard.len()) as u64;
                passive_symbols.push(sent * shard.symbols_per_sample());
            }
            accounting::overhead_hfcl(rounds, p, clients, &passive_symbols)?
        }
    };
    Ok(value)
}

fn dispatch(
    config: &ExperimentConfig,
    shards: &[Shard],
    validation: &[Sample],
    spec: &ModelSpec,
) -> Result<TrainOutcome, CliError> {
    let training = TrainingConfig {
        eta: config.eta,
        minibatches: config.minibatches,
        batch_size: config.batch_size,
        rounds: config.rounds,
        seed: config.seed,
        loss: Loss::CrossEntropy,
        aggregation: Default::default(),
    };
    let channel = ChannelConfig::new(config.bits, config.snr_db, config.snr_db.is_finite(), config.seed)?;
    let val = Some(validation);

    let outcome = match config.mode {
        Mode::Cl => federation::run_cl(shards, spec, &training, val)?,
        Mode::Fl => {
            let roster = ClientRoster::new(shards.to_vec(), 0)?;
            federation::run_fl(&roster, spec, &training, &channel, val)?
        }
        Mode::FlActiveOnly => {
            let roster = ClientRoster::new(shards.to_vec(), config.passive)?;
            federation::run_fl_active_only(&roster, spec, &training, &channel, val)?
        }
        Mode::Hfcl => {
            let roster = ClientRoster::new(shards.to_vec(), config.passive)?;
            federation::run_hfcl(&roster, spec, &training, &channel, val)?
        }
        Mode::HfclSdt => {
            let roster = ClientRoster::new(shards.to_vec(), config.passive)?;
            federation::run_hfcl_sdt(&roster, spec, &training, &channel, val)?
        }
    };
    Ok(outcome)
}

/// Runs the configured experiment in memory and renders its metrics.
///
/// Training runs end with the footer's formula total reconciled exactly
/// against the ledger; a mismatch is an internal error, never silently
/// reported. The reference-CNN preset runs accounting only: no rounds,
/// formula values in the footer.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary, CliError> {
    config.validate()?;
    let prepared = prepare_data(config)?;
    let spec = model_spec(config, prepared.input_dim)?;
    let p = spec.param_count() as u64;

    let dataset_symbols: u64 = prepared.shards.iter().map(Shard::symbol_count).sum();
    let dataset_input_symbols: u64 = prepared
        .shards
        .iter()
        .map(|sh| (sh.len() * sh.samples()[0].rows() * sh.samples()[0].cols()) as u64)
        .sum();
    let formula = formula_symbols(config, p, &prepared.shards)?;

    let mut footer = Footer {
        mode: config.mode.as_str().to_string(),
        clients: config.clients,
        passive: config.passive,
        rounds: config.rounds,
        bits: config.bits,
        snr_db: config.snr_db,
        seed: config.seed,
        param_count: p,
        formula_symbols: formula,
        formula_blocks: blocks(formula),
        ledger_symbols: None,
        dataset_symbols,
        dataset_input_symbols,
        theta_sha256: None,
        final_train_loss: None,
        final_val_acc_pct: None,
    };

    if config.model == ModelPreset::PaperCnnCount {
        let rendered = metrics::render(&[], &footer);
        return Ok(RunSummary {
            config: config.clone(),
            rows: Vec::new(),
            footer,
            theta: None,
            rendered,
        });
    }

    let outcome = dispatch(config, &prepared.shards, &prepared.validation, &spec)?;
    let ledger_total = outcome.ledger.total_symbols();
    if ledger_total != formula {
        return Err(CliError::Internal(format!(
            "ledger total {ledger_total} disagrees with closed-form overhead {formula}"
        )));
    }

    let rows: Vec<MetricsRow> = outcome.ledger.records().iter().map(MetricsRow::from_record).collect();
    footer.ledger_symbols = Some(ledger_total);
    footer.theta_sha256 = Some(metrics::theta_sha256(outcome.params.theta()));
    footer.final_train_loss = rows.last().map(|r| r.train_loss);
    footer.final_val_acc_pct = rows.last().map(|r| r.val_acc_pct);

    let rendered = metrics::render(&rows, &footer);
    Ok(RunSummary {
        config: config.clone(),
        rows,
        footer,
        theta: Some(outcome.params.theta().to_vec()),
        rendered,
    })
}

/// Runs the experiment and writes the metrics file to `config.out`.
pub fn run_experiment_to_file(config: &ExperimentConfig) -> Result<RunSummary, CliError> {
    let summary = run_experiment(config)?;
    metrics::write_atomic(&config.out, &summary.rendered)?;
    Ok(summary)
}
