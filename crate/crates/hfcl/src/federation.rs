//! Protocol orchestration: centralized, federated, hybrid, and
//! hybrid-with-sequential-data-transmission training loops.
//!
//! One engine drives every mode. Passive clients upload their shards to
//! the parameter server, which computes their gradients on their behalf;
//! active clients compute gradients locally and upload them through the
//! lossy channel. Each round applies a single update: the parameter
//! vector moves against the sum of the passive-group mean and the
//! active-group mean. Degenerate rosters collapse exactly: all-active
//! equals federated training, all-passive (noise off) equals centralized
//! training on the pooled shards, bit for bit under matched seeds.
//!
//! Every random draw comes from a stream keyed by (seed, domain, client,
//! round), so timing and scheduling cannot change results, and disabling
//! one noise source cannot shift any other stream.

use rand::Rng;
use thiserror::Error;

use crate::accounting::{self, AccountingError, LinkDemand};
use crate::channel::{transmit_dataset, transmit_gradient, ChannelConfig, ChannelError};
use crate::data::{DataError, Sample, Shard};
use crate::nn::{self, Aggregation, GradientVector, Loss, ModelParams, ModelSpec, NnError, TrainingConfig};
use crate::seeds::{self, domain};

/// Bandwidth budget used when reporting per-round delays.
pub const DELAY_TOTAL_BANDWIDTH: f64 = 1.0;
/// Link SNR used when reporting per-round delays; `ln(1 + snr) = 1`, so a
/// link's rate equals its allocated bandwidth.
pub const DELAY_LINK_SNR: f64 = std::f64::consts::E - 1.0;

#[derive(Debug, Error)]
pub enum FederationError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Accounting(#[from] AccountingError),
}

/// The client population: the first `passive` shards belong to passive
/// clients (they upload data), the rest to active clients (they upload
/// gradients). Client ids must be strictly ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientRoster {
    shards: Vec<Shard>,
    passive: usize,
}

impl ClientRoster {
    pub fn new(shards: Vec<Shard>, passive: usize) -> Result<Self, FederationError> {
        if shards.is_empty() {
            return Err(FederationError::Config("roster needs at least one client".into()));
        }
        if passive > shards.len() {
            return Err(FederationError::Config(format!(
                "passive count {passive} exceeds client count {}",
                shards.len()
            )));
        }
        if shards.windows(2).any(|w| w[0].client_id() >= w[1].client_id()) {
            return Err(FederationError::Config("client ids must be strictly ascending".into()));
        }
        Ok(Self { shards, passive })
    }

    pub fn clients(&self) -> usize {
        self.shards.len()
    }

    pub fn passive_count(&self) -> usize {
        self.passive
    }

    pub fn active_count(&self) -> usize {
        self.shards.len() - self.passive
    }

    pub fn shards(&self) -> &[Shard] {
        &self.shards
    }

    pub fn passive_shards(&self) -> &[Shard] {
        &self.shards[..self.passive]
    }

    pub fn active_shards(&self) -> &[Shard] {
        &self.shards[self.passive..]
    }
}

/// Per-client traffic within one round. `counted` includes the parameter
/// downlink for active clients; `uplink` is what the delay model sees.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientTraffic {
    pub client: usize,
    pub uplink_symbols: u64,
    pub counted_symbols: u64,
}

/// One completed communication round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub traffic: Vec<ClientTraffic>,
    pub gradient_norm: f64,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    pub cum_symbols: u64,
    pub max_delay: f64,
}

/// The round-by-round account of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundLedger {
    records: Vec<RoundRecord>,
}

impl RoundLedger {
    fn push(&mut self, record: RoundRecord) {
        if let Some(last) = self.records.last() {
            assert!(
                record.cum_symbols >= last.cum_symbols,
                "cumulative overhead must be non-decreasing"
            );
        }
        self.records.push(record);
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    /// Total symbols transmitted over the whole run.
    pub fn total_symbols(&self) -> u64 {
        self.records.last().map_or(0, |r| r.cum_symbols)
    }
}

/// Trained parameters plus the per-round ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub ledger: RoundLedger,
}

/// Parameter-server bookkeeping for one passive client under sequential
/// data transmission: the shard arrives in blocks of `block_size`
/// samples (the last block may be partial) and the collected prefix
/// grows monotonically.
#[derive(Debug, Clone)]
pub struct SdtState {
    block_size: usize,
    full_len: usize,
    received_blocks: usize,
    collected: Vec<Sample>,
}

impl SdtState {
    pub fn new(full_len: usize, block_size: usize) -> Self {
        assert!(block_size > 0, "block size must be positive");
        Self {
            block_size,
            full_len,
            received_blocks: 0,
            collected: Vec::new(),
        }
    }

    /// Number of blocks the shard splits into: `ceil(len / block_size)`.
    pub fn n_blocks(&self) -> usize {
        self.full_len.div_ceil(self.block_size)
    }

    pub fn received_blocks(&self) -> usize {
        self.received_blocks
    }

    pub fn is_complete(&self) -> bool {
        self.collected.len() >= self.full_len
    }

    /// The shard index range of the next block to transmit.
    pub fn next_block_range(&self) -> std::ops::Range<usize> {
        let start = self.collected.len();
        start..(start + self.block_size).min(self.full_len)
    }

    fn receive(&mut self, samples: Vec<Sample>) {
        self.collected.extend(samples);
        self.received_blocks += 1;
        debug_assert!(self.received_blocks <= self.n_blocks());
        debug_assert!(self.collected.len() <= self.full_len);
    }

    /// Samples available to the server so far.
    pub fn collected(&self) -> &[Sample] {
        &self.collected
    }

    /// Window size after round `t`: `min(t * block_size, len)`.
    pub fn window_len_after(&self, round: usize) -> usize {
        (round * self.block_size).min(self.full_len)
    }
}

fn group_mean_into(combined: &mut [f64], group: &[GradientVector], p: usize) -> Result<(), FederationError> {
    if group.is_empty() {
        return Ok(());
    }
    for g in group {
        if g.len() != p {
            return Err(NnError::GradientLength { expected: p, got: g.len() }.into());
        }
    }
    let mut sum = vec![0.0; p];
    for g in group {
        for (s, v) in sum.iter_mut().zip(g.values()) {
            *s += v;
        }
    }
    let scale = 1.0 / group.len() as f64;
    for (c, s) in combined.iter_mut().zip(&sum) {
        *c += s * scale;
    }
    Ok(())
}

/// The update direction: passive-group mean plus active-group mean. An
/// empty group contributes a zero vector.
fn combine_groups(p: usize, server: &[GradientVector], device: &[GradientVector]) -> Result<Vec<f64>, FederationError> {
    let mut combined = vec![0.0; p];
    group_mean_into(&mut combined, server, p)?;
    group_mean_into(&mut combined, device, p)?;
    Ok(combined)
}

/// Comparison variant: one mean over every participating gradient,
/// weighted by the sample count behind it.
fn combine_sample_weighted(p: usize, grads: &[(&GradientVector, usize)]) -> Result<Vec<f64>, FederationError> {
    let total: usize = grads.iter().map(|(_, n)| n).sum();
    let mut combined = vec![0.0; p];
    if total == 0 {
        return Ok(combined);
    }
    for (g, n) in grads {
        if g.len() != p {
            return Err(NnError::GradientLength { expected: p, got: g.len() }.into());
        }
        let w = *n as f64 / total as f64;
        for (c, v) in combined.iter_mut().zip(g.values()) {
            *c += w * v;
        }
    }
    Ok(combined)
}

/// Hybrid aggregation step: `theta - eta * (mean(server) + mean(device))`.
pub fn hfcl_aggregate(
    params: &ModelParams,
    server_grads: &[GradientVector],
    device_grads: &[GradientVector],
    eta: f64,
) -> Result<ModelParams, FederationError> {
    let combined = combine_groups(params.len(), server_grads, device_grads)?;
    Ok(nn::sgd_step(params, &GradientVector::clean(combined), eta)?)
}

/// Fraction of argmax-correct predictions, in percent.
pub fn evaluate(params: &ModelParams, validation: &[Sample]) -> Result<f64, FederationError> {
    if validation.is_empty() {
        return Err(FederationError::Config("validation set is empty".into()));
    }
    let inputs: Vec<&[f64]> = validation.iter().map(|s| s.input()).collect();
    let preds = nn::forward(params, &inputs)?;
    let correct = preds
        .iter()
        .zip(validation)
        .filter(|(pred, sample)| argmax(pred) == sample.class())
        .count();
    Ok(correct as f64 / validation.len() as f64 * 100.0)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Gradient for a passive client under the growing SDT window. For
/// `round <= n_blocks` the window is the received prefix (normalized by
/// the true received count, so a partial final block is not biased); past
/// that the window is the whole shard.
#[allow(clippy::too_many_arguments)]
pub fn sdt_window_gradient<R: Rng + ?Sized>(
    params: &ModelParams,
    window: &[Sample],
    round: usize,
    n_blocks: usize,
    block_size: usize,
    minibatches: usize,
    loss: Loss,
    rng: &mut R,
) -> Result<GradientVector, FederationError> {
    if round == 0 {
        return Err(FederationError::Config("round index starts at 1".into()));
    }
    if round <= n_blocks && window.len() > round * block_size {
        return Err(FederationError::Config(format!(
            "window of {} samples exceeds round capacity {}",
            window.len(),
            round * block_size
        )));
    }
    Ok(nn::minibatch_gradient(params, window, minibatches, loss, rng)?)
}

fn training_loss(params: &ModelParams, roster: &ClientRoster, loss: Loss) -> Result<f64, FederationError> {
    let inputs: Vec<&[f64]> = roster
        .shards()
        .iter()
        .flat_map(|sh| sh.samples().iter().map(|s| s.input()))
        .collect();
    let labels: Vec<Vec<f64>> = roster
        .shards()
        .iter()
        .flat_map(|sh| sh.samples().iter().map(|s| s.label().to_vec()))
        .collect();
    let preds = nn::forward(params, &inputs)?;
    Ok(loss.evaluate(&preds, &labels)?)
}

fn round_max_delay(traffic: &[ClientTraffic]) -> Result<f64, FederationError> {
    if traffic.iter().all(|t| t.uplink_symbols == 0) {
        return Ok(0.0);
    }
    let demands: Vec<LinkDemand> = traffic
        .iter()
        .map(|t| LinkDemand {
            client: t.client,
            symbols: t.uplink_symbols,
            snr: DELAY_LINK_SNR,
        })
        .collect();
    let links = accounting::allocate_bandwidth(&demands, DELAY_TOTAL_BANDWIDTH)?;
    Ok(accounting::max_delay(&links)?)
}

fn minibatch_rng(seed: u64, client: usize, round: usize) -> rand_chacha::ChaCha8Rng {
    seeds::stream_rng(seed, &[domain::MINIBATCH, client as u64, round as u64])
}

fn run_protocol(
    roster: &ClientRoster,
    spec: &ModelSpec,
    cfg: &TrainingConfig,
    channel: Option<&ChannelConfig>,
    sdt: bool,
    validation: Option<&[Sample]>,
) -> Result<TrainOutcome, FederationError> {
    cfg.validate()?;
    let p = spec.param_count();
    let mut params = spec.init_params(&mut seeds::stream_rng(cfg.seed, &[domain::INIT]))?;

    // Server-side copies of passive data.
    let mut received: Vec<Shard> = Vec::new();
    let mut sdt_states: Vec<SdtState> = Vec::new();
    if sdt {
        sdt_states = roster
            .passive_shards()
            .iter()
            .map(|sh| SdtState::new(sh.len(), p))
            .collect();
    } else {
        // The whole-shard upload is the single-block degenerate case of
        // the sequential schedule, so it draws from the round-1 stream.
        for shard in roster.passive_shards() {
            let got = match channel {
                Some(ch) => transmit_dataset(shard, ch, &mut ch.dataset_rng(shard.client_id(), 1))?,
                None => shard.clone(),
            };
            received.push(got);
        }
    }

    let mut ledger = RoundLedger::default();
    let mut cum: u64 = 0;

    for round in 1..=cfg.rounds {
        let mut traffic: Vec<ClientTraffic> = Vec::with_capacity(roster.clients());

        // Dataset uplinks.
        if sdt {
            for (state, shard) in sdt_states.iter_mut().zip(roster.passive_shards()) {
                let uplink = if state.is_complete() {
                    0
                } else {
                    let range = state.next_block_range();
                    let block = Shard::new(shard.client_id(), shard.samples()[range].to_vec())?;
                    let arrived = match channel {
                        Some(ch) => transmit_dataset(&block, ch, &mut ch.dataset_rng(shard.client_id(), round))?,
                        None => block,
                    };
                    let symbols = arrived.symbol_count();
                    state.receive(arrived.samples().to_vec());
                    symbols
                };
                traffic.push(ClientTraffic {
                    client: shard.client_id(),
                    uplink_symbols: uplink,
                    counted_symbols: uplink,
                });
            }
        } else {
            for shard in roster.passive_shards() {
                let uplink = if round == 1 { shard.symbol_count() } else { 0 };
                traffic.push(ClientTraffic {
                    client: shard.client_id(),
                    uplink_symbols: uplink,
                    counted_symbols: uplink,
                });
            }
        }

        // Server-side gradients for passive clients, ascending client id.
        let mut server_grads = Vec::with_capacity(roster.passive_count());
        let mut server_counts = Vec::with_capacity(roster.passive_count());
        if sdt {
            for (state, shard) in sdt_states.iter().zip(roster.passive_shards()) {
                let k = shard.client_id();
                let window = state.collected();
                let m_b = cfg.minibatches_for(window.len());
                let g = sdt_window_gradient(
                    &params,
                    window,
                    round,
                    state.n_blocks(),
                    p,
                    m_b,
                    cfg.loss,
                    &mut minibatch_rng(cfg.seed, k, round),
                )?
                .from_client(k);
                server_grads.push(g);
                server_counts.push(window.len());
            }
        } else {
            for (got, shard) in received.iter().zip(roster.passive_shards()) {
                let k = shard.client_id();
                let m_b = cfg.minibatches_for(got.len());
                let g = nn::minibatch_gradient(
                    &params,
                    got.samples(),
                    m_b,
                    cfg.loss,
                    &mut minibatch_rng(cfg.seed, k, round),
                )?
                .from_client(k);
                server_grads.push(g);
                server_counts.push(got.len());
            }
        }

        // Device-side gradients for active clients, uplinked through the
        // channel; the parameter downlink is charged via the factor 2.
        let mut device_grads = Vec::with_capacity(roster.active_count());
        for shard in roster.active_shards() {
            let k = shard.client_id();
            let m_b = cfg.minibatches_for(shard.len());
            let g = nn::minibatch_gradient(
                &params,
                shard.samples(),
                m_b,
                cfg.loss,
                &mut minibatch_rng(cfg.seed, k, round),
            )?
            .from_client(k);
            let sent = match channel {
                Some(ch) => transmit_gradient(&g, ch, &mut ch.gradient_rng(k, round))?,
                None => g,
            };
            device_grads.push(sent);
            traffic.push(ClientTraffic {
                client: k,
                uplink_symbols: p as u64,
                counted_symbols: 2 * p as u64,
            });
        }

        // Aggregate and update.
        let combined = match cfg.aggregation {
            Aggregation::GroupMeanSum => combine_groups(p, &server_grads, &device_grads)?,
            Aggregation::SampleWeighted => {
                let pairs: Vec<(&GradientVector, usize)> = server_grads
                    .iter()
                    .zip(server_counts.iter().copied())
                    .chain(device_grads.iter().zip(roster.active_shards().iter().map(Shard::len)))
                    .collect();
                combine_sample_weighted(p, &pairs)?
            }
        };
        let gradient_norm = combined.iter().map(|v| v * v).sum::<f64>().sqrt();
        params = nn::sgd_step(&params, &GradientVector::clean(combined), cfg.eta)?;

        // Metrics for the completed round.
        let round_symbols: u64 = traffic.iter().map(|t| t.counted_symbols).sum();
        cum = cum
            .checked_add(round_symbols)
            .ok_or(AccountingError::Overflow)?;
        let train_loss = training_loss(&params, roster, cfg.loss)?;
        let val_accuracy = match validation {
            Some(v) => Some(evaluate(&params, v)?),
            None => None,
        };
        let max_delay = round_max_delay(&traffic)?;

        ledger.push(RoundRecord {
            round,
            traffic,
            gradient_norm,
            train_loss,
            val_accuracy,
            cum_symbols: cum,
            max_delay,
        });
    }

    Ok(TrainOutcome { params, ledger })
}

/// Centralized training: the pooled shards live at the server, which
/// pays their upload once and runs mini-batch gradient descent over them
/// (shard-wise, so an all-passive hybrid run with a silent channel
/// reproduces it exactly).
pub fn run_cl(
    shards: &[Shard],
    spec: &ModelSpec,
    cfg: &TrainingConfig,
    validation: Option<&[Sample]>,
) -> Result<TrainOutcome, FederationError> {
    let roster = ClientRoster::new(shards.to_vec(), shards.len())?;
    run_protocol(&roster, spec, cfg, None, false, validation)
}

/// Federated training: every client is active and uploads gradients
/// through the channel each round.
pub fn run_fl(
    roster: &ClientRoster,
    spec: &ModelSpec,
    cfg: &TrainingConfig,
    channel: &ChannelConfig,
    validation: Option<&[Sample]>,
) -> Result<TrainOutcome, FederationError> {
    if roster.passive_count() != 0 {
        return Err(FederationError::Config(
            "federated mode requires zero passive clients".into(),
        ));
    }
    run_protocol(roster, spec, cfg, Some(channel), false, validation)
}

/// Federated training restricted to the active clients: passive shards
/// are dropped entirely (their data never reaches the server).
pub fn run_fl_active_only(
    roster: &ClientRoster,
    spec: &ModelSpec,
    cfg: &TrainingConfig,
    channel: &ChannelConfig,
    validation: Option<&[Sample]>,
) -> Result<TrainOutcome, FederationError> {
    if roster.active_count() == 0 {
        return Err(FederationError::Config(
            "active-only federated training cannot work with every client passive".into(),
        ));
    }
    let actives = ClientRoster::new(roster.active_shards().to_vec(), 0)?;
    run_protocol(&actives, spec, cfg, Some(channel), false, validation)
}

/// Hybrid training: passive shards are uploaded in full before round 1,
/// then every round the server computes passive gradients on the
/// received data while active clients upload theirs through the channel.
pub fn run_hfcl(
    roster: &ClientRoster,
    spec: &ModelSpec,
    cfg: &TrainingConfig,
    channel: &ChannelConfig,
    validation: Option<&[Sample]>,
) -> Result<TrainOutcome, FederationError> {
    run_protocol(roster, spec, cfg, Some(channel), false, validation)
}

/// Hybrid training with sequential data transmission: passive shards
/// arrive in per-round blocks of P samples and the server trains on the
/// growing prefix, so learning starts immediately. Total overhead
/// matches `run_hfcl` once every block has arrived.
pub fn run_hfcl_sdt(
    roster: &ClientRoster,
    spec: &ModelSpec,
    cfg: &TrainingConfig,
    channel: &ChannelConfig,
    validation: Option<&[Sample]>,
) -> Result<TrainOutcome, FederationError> {
    run_protocol(roster, spec, cfg, Some(channel), true, validation)
}
