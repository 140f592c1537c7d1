//! Library side of the experiment CLI: configuration, execution, metrics
//! files, and sweeps. The `hfcl` binary is a thin wrapper over these.

pub mod config;
pub mod metrics;
pub mod runner;
pub mod sweep;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] hfcl::data::DataError),
    #[error(transparent)]
    Nn(#[from] hfcl::nn::NnError),
    #[error(transparent)]
    Channel(#[from] hfcl::channel::ChannelError),
    #[error(transparent)]
    Federation(#[from] hfcl::federation::FederationError),
    #[error(transparent)]
    Accounting(#[from] hfcl::accounting::AccountingError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("internal error: {0}")]
    Internal(String),
}
