//! Desk-scale simulator for hybrid federated/centralized training.
//!
//! A population of simulated clients jointly trains a small classifier
//! under a lossy, quantized uplink. Clients with compute run federated
//! updates (gradients uploaded through the channel); clients without it
//! upload their data once — or block by block — and the parameter server
//! computes on their behalf. The crate tracks every transmitted symbol
//! exactly and reports per-round transmission delays under min-max
//! bandwidth allocation.
//!
//! Modules:
//! - [`nn`]: flat-parameter network engine (forward, losses, backprop, SGD)
//! - [`data`]: IDX ingestion, IID sharding, symbol accounting
//! - [`channel`]: B-bit quantization and SNR-derived Gaussian noise
//! - [`federation`]: the CL / FL / HFCL / HFCL-SDT training loops
//! - [`accounting`]: closed-form overheads, delays, bandwidth allocation
//! - [`fixtures`]: IDX writers and a synthetic digit-style dataset
//! - [`seeds`]: keyed RNG streams for bit-reproducible runs

pub mod accounting;
pub mod channel;
pub mod data;
pub mod federation;
pub mod fixtures;
pub mod nn;
pub mod seeds;

pub use accounting::{allocate_bandwidth, blocks, overhead_cl, overhead_fl, overhead_hfcl, LinkDemand, LinkSpec, OverheadReport};
pub use channel::{dataset_noise_sigma_squared, noise_sigma, quantize, transmit_dataset, transmit_gradient, ChannelConfig};
pub use data::{load_idx, partition_iid, symbol_count, Sample, Shard};
pub use federation::{
    evaluate, hfcl_aggregate, run_cl, run_fl, run_fl_active_only, run_hfcl, run_hfcl_sdt, ClientRoster,
    FederationError, RoundLedger, RoundRecord, TrainOutcome,
};
pub use nn::{backward, forward, loss_mse, loss_xent, minibatch_gradient, sgd_step, Aggregation, GradientVector, Loss, ModelParams, ModelSpec, TrainingConfig};
