//! Communication-overhead formulas, the transmission-delay model, and
//! min-max bandwidth allocation.
//!
//! Overheads are exact symbol counts in checked 64-bit integer
//! arithmetic. One "transmission block" is 1,000 symbols; block counts
//! round up. Delays follow `tau = d / (B ln(1 + SNR))`; the allocator
//! splits a total bandwidth budget so that every nonzero demand finishes
//! at the same time, which minimizes the maximum delay.

use thiserror::Error;

/// Symbols per reporting block.
pub const SYMBOLS_PER_BLOCK: u64 = 1_000;

#[derive(Debug, Error)]
pub enum AccountingError {
    #[error("symbol arithmetic overflows 64 bits")]
    Overflow,
    #[error("passive client count {passive} exceeds client count {clients}")]
    BadSplit { passive: usize, clients: usize },
    #[error("expected {expected} passive symbol counts, got {got}")]
    PassiveCount { expected: usize, got: usize },
    #[error("no links to allocate bandwidth across")]
    NoLinks,
    #[error("total bandwidth must be positive, got {0}")]
    BadBandwidth(f64),
    #[error("link SNR must be positive, got {0}")]
    BadSnr(f64),
    #[error("link with pending symbols has zero bandwidth")]
    ZeroBandwidth,
}

/// Overhead of centralized training: the whole dataset is uploaded once.
pub fn overhead_cl(dataset_symbols: u64) -> u64 {
    dataset_symbols
}

/// Overhead of federated training: every round each of the `k` clients
/// uploads `p` gradient symbols and receives `p` parameter symbols back.
pub fn overhead_fl(rounds: u64, p: u64, k: u64) -> Result<u64, AccountingError> {
    2u64.checked_mul(rounds)
        .and_then(|v| v.checked_mul(p))
        .and_then(|v| v.checked_mul(k))
        .ok_or(AccountingError::Overflow)
}

/// Overhead of the hybrid scheme: the passive shards are uploaded once
/// and the remaining `k - passive` clients exchange gradients each round.
pub fn overhead_hfcl(
    rounds: u64,
    p: u64,
    clients: usize,
    passive_symbols: &[u64],
) -> Result<u64, AccountingError> {
    let passive = passive_symbols.len();
    if passive > clients {
        return Err(AccountingError::BadSplit { passive, clients });
    }
    let upload = passive_symbols
        .iter()
        .try_fold(0u64, |acc, &s| acc.checked_add(s))
        .ok_or(AccountingError::Overflow)?;
    let gradient = overhead_fl(rounds, p, (clients - passive) as u64)?;
    upload.checked_add(gradient).ok_or(AccountingError::Overflow)
}

/// Symbols expressed in 1,000-symbol transmission blocks, rounded up.
pub fn blocks(symbols: u64) -> u64 {
    symbols.div_ceil(SYMBOLS_PER_BLOCK)
}

/// One uplink: pending symbols, link SNR (linear), and the bandwidth the
/// allocator assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub client: usize,
    pub symbols: u64,
    pub snr: f64,
    pub bandwidth: f64,
}

impl LinkSpec {
    /// Transmission time `d / (B ln(1 + SNR))`. A link with nothing to
    /// send takes zero time regardless of bandwidth.
    pub fn delay(&self) -> Result<f64, AccountingError> {
        if self.symbols == 0 {
            return Ok(0.0);
        }
        if !(self.snr > 0.0) {
            return Err(AccountingError::BadSnr(self.snr));
        }
        if !(self.bandwidth > 0.0) {
            return Err(AccountingError::ZeroBandwidth);
        }
        Ok(self.symbols as f64 / (self.bandwidth * (1.0 + self.snr).ln()))
    }
}

/// An uplink demand before bandwidth assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkDemand {
    pub client: usize,
    pub symbols: u64,
    pub snr: f64,
}

/// Splits `total_bandwidth` across the links to minimize the slowest
/// transmission. Proportional shares `B_k = B c_k / sum c_j` with
/// `c_k = d_k / ln(1 + SNR_k)` equalize every nonzero delay, which is
/// optimal because each delay is strictly decreasing in its own
/// bandwidth. Zero-demand links receive zero bandwidth.
pub fn allocate_bandwidth(demands: &[LinkDemand], total_bandwidth: f64) -> Result<Vec<LinkSpec>, AccountingError> {
    if demands.is_empty() {
        return Err(AccountingError::NoLinks);
    }
    if !(total_bandwidth > 0.0) {
        return Err(AccountingError::BadBandwidth(total_bandwidth));
    }
    let mut costs = Vec::with_capacity(demands.len());
    for d in demands {
        if d.symbols == 0 {
            costs.push(0.0);
            continue;
        }
        if !(d.snr > 0.0) {
            return Err(AccountingError::BadSnr(d.snr));
        }
        costs.push(d.symbols as f64 / (1.0 + d.snr).ln());
    }
    let total_cost: f64 = costs.iter().sum();
    if total_cost == 0.0 {
        // Nothing to send anywhere; split evenly to keep the budget spent.
        let share = total_bandwidth / demands.len() as f64;
        return Ok(demands
            .iter()
            .map(|d| LinkSpec {
                client: d.client,
                symbols: d.symbols,
                snr: d.snr,
                bandwidth: share,
            })
            .collect());
    }
    Ok(demands
        .iter()
        .zip(&costs)
        .map(|(d, c)| LinkSpec {
            client: d.client,
            symbols: d.symbols,
            snr: d.snr,
            bandwidth: total_bandwidth * c / total_cost,
        })
        .collect())
}

/// Maximum delay across an allocated link set.
pub fn max_delay(links: &[LinkSpec]) -> Result<f64, AccountingError> {
    let mut worst = 0.0f64;
    for link in links {
        worst = worst.max(link.delay()?);
    }
    Ok(worst)
}

/// Closed-form overhead report for one roster configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct OverheadReport {
    pub cl_symbols: u64,
    pub fl_symbols: u64,
    pub hfcl_symbols: u64,
    pub dataset_symbols: u64,
    pub rounds: u64,
    pub p: u64,
    pub clients: usize,
    pub passive: usize,
}

impl OverheadReport {
    pub fn new(
        dataset_symbols: u64,
        rounds: u64,
        p: u64,
        clients: usize,
        passive_symbols: &[u64],
    ) -> Result<Self, AccountingError> {
        Ok(Self {
            cl_symbols: overhead_cl(dataset_symbols),
            fl_symbols: overhead_fl(rounds, p, clients as u64)?,
            hfcl_symbols: overhead_hfcl(rounds, p, clients, passive_symbols)?,
            dataset_symbols,
            rounds,
            p,
            clients,
            passive: passive_symbols.len(),
        })
    }

    pub fn cl_blocks(&self) -> u64 {
        blocks(self.cl_symbols)
    }

    pub fn fl_blocks(&self) -> u64 {
        blocks(self.fl_symbols)
    }

    pub fn hfcl_blocks(&self) -> u64 {
        blocks(self.hfcl_symbols)
    }
}
