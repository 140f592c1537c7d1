//! Lossy uplink model: B-bit quantization of gradients plus additive
//! Gaussian noise at a configured SNR, applied to gradient uplinks from
//! active clients and to dataset uploads from passive clients.
//!
//! The noise variance inverts the printed SNR definition literally:
//! `SNR_db = 20 log10(||v||^2 / sigma^2)`, i.e. `sigma^2 =
//! ||v||^2 / 10^(SNR_db / 20)`. The factor 20 against a squared norm is
//! unusual (a conventional power ratio would use 10); both readings exist,
//! and this module implements the printed one. Downlink traffic
//! (parameter broadcast to active clients) is noiseless and unquantized.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::data::{DataError, Sample, Shard};
use crate::nn::{GradientVector, Provenance};
use crate::seeds::{self, domain};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("quantization bits must be in 1..=32, got {0}")]
    BadBits(u32),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Uplink corruption settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    bits: u32,
    snr_theta_db: f64,
    noise_enabled: bool,
    seed: u64,
}

impl ChannelConfig {
    pub fn new(bits: u32, snr_theta_db: f64, noise_enabled: bool, seed: u64) -> Result<Self, ChannelError> {
        if !(1..=32).contains(&bits) {
            return Err(ChannelError::BadBits(bits));
        }
        Ok(Self {
            bits,
            snr_theta_db,
            noise_enabled,
            seed,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn snr_theta_db(&self) -> f64 {
        self.snr_theta_db
    }

    pub fn noise_enabled(&self) -> bool {
        self.noise_enabled
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Per-(client, round) RNG stream for gradient-uplink noise.
    pub fn gradient_rng(&self, client: usize, round: usize) -> ChaCha8Rng {
        seeds::stream_rng(self.seed, &[domain::CHANNEL_GRADIENT, client as u64, round as u64])
    }

    /// Per-(client, round) RNG stream for dataset-uplink noise.
    pub fn dataset_rng(&self, client: usize, round: usize) -> ChaCha8Rng {
        seeds::stream_rng(self.seed, &[domain::CHANNEL_DATASET, client as u64, round as u64])
    }
}

fn quantize_values(values: &[f64], bits: u32) -> Vec<f64> {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return values.to_vec();
    }
    let levels = (1u64 << bits) - 1; // 2^B levels -> 2^B - 1 gaps
    let spacing = 2.0 * scale / levels as f64;
    values
        .iter()
        .map(|&v| {
            let idx = ((v + scale) / spacing).round().min(levels as f64).max(0.0);
            -scale + idx * spacing
        })
        .collect()
}

/// Uniform symmetric quantization: values snap to the nearest of `2^B`
/// evenly spaced levels spanning `[-s, s]` with `s = max|v|`, returned
/// dequantized. An all-zero vector passes through unchanged. Idempotent
/// at fixed `B`.
pub fn quantize(g: &GradientVector, bits: u32) -> Result<GradientVector, ChannelError> {
    if !(1..=32).contains(&bits) {
        return Err(ChannelError::BadBits(bits));
    }
    Ok(GradientVector::with_provenance(
        quantize_values(g.values(), bits),
        Provenance::Quantized,
        g.client(),
    ))
}

/// Noise variance from the printed SNR inversion:
/// `sigma^2 = ||v||^2 / 10^(snr_db / 20)`. A zero-norm signal gets zero
/// variance (no noise on nothing).
pub fn noise_sigma_squared(squared_norm: f64, snr_db: f64) -> f64 {
    if squared_norm == 0.0 {
        return 0.0;
    }
    squared_norm / 10f64.powf(snr_db / 20.0)
}

/// Convenience overload for gradients.
pub fn noise_sigma(g: &GradientVector, snr_db: f64) -> f64 {
    noise_sigma_squared(g.squared_norm(), snr_db)
}

fn add_noise<R: Rng + ?Sized>(values: &mut [f64], sigma_squared: f64, rng: &mut R) {
    if sigma_squared == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma_squared.sqrt()).expect("finite std dev");
    for v in values.iter_mut() {
        *v += normal.sample(rng);
    }
}

/// Sends a clean gradient through the uplink: quantize, then add
/// `N(0, sigma^2 I)` with the variance computed from the pre-quantization
/// gradient. Deterministic given the RNG stream.
pub fn transmit_gradient<R: Rng + ?Sized>(
    g: &GradientVector,
    config: &ChannelConfig,
    rng: &mut R,
) -> Result<GradientVector, ChannelError> {
    debug_assert_eq!(g.provenance(), Provenance::Clean, "gradient already transmitted");
    let mut values = quantize_values(g.values(), config.bits);
    if config.noise_enabled {
        let sigma2 = noise_sigma_squared(g.squared_norm(), config.snr_theta_db);
        add_noise(&mut values, sigma2, rng);
    }
    let provenance = if config.noise_enabled {
        Provenance::QuantizedNoised
    } else {
        Provenance::Quantized
    };
    Ok(GradientVector::with_provenance(values, provenance, g.client()))
}

/// Noise variance for a dataset block: the same SNR inversion applied to
/// the block's mean per-symbol signal power, `sigma^2 =
/// (||x||^2 / n) / 10^(snr_db / 20)`. Normalizing per symbol keeps a
/// matched SNR far gentler on pixels than on gradients, whose printed
/// formula scales with the whole vector norm; this is what lets passive
/// data stay useful at SNRs that visibly corrupt gradient uplinks.
pub fn dataset_noise_sigma_squared(input_squared_norm: f64, symbols: usize, snr_db: f64) -> f64 {
    if symbols == 0 {
        return 0.0;
    }
    noise_sigma_squared(input_squared_norm / symbols as f64, snr_db)
}

/// Sends a dataset shard (or one SDT block of it) through the uplink.
/// Input symbols receive additive Gaussian noise with the per-symbol
/// variance from [`dataset_noise_sigma_squared`] over the transmitted
/// block; labels pass through unmodified. With noise disabled the shard
/// is returned bit-identical.
pub fn transmit_dataset<R: Rng + ?Sized>(
    shard: &Shard,
    config: &ChannelConfig,
    rng: &mut R,
) -> Result<Shard, ChannelError> {
    if !config.noise_enabled {
        return Ok(shard.clone());
    }
    let squared_norm: f64 = shard
        .samples()
        .iter()
        .flat_map(|s| s.input().iter())
        .map(|v| v * v)
        .sum();
    let symbols = shard.len() * shard.samples()[0].input().len();
    let sigma2 = dataset_noise_sigma_squared(squared_norm, symbols, config.snr_theta_db);
    let samples: Vec<Sample> = shard
        .samples()
        .iter()
        .map(|s| {
            let mut input = s.input().to_vec();
            add_noise(&mut input, sigma2, rng);
            s.with_input(input)
        })
        .collect();
    Ok(shard.with_samples(samples)?)
}
