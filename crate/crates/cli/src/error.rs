use thiserror::Error;

use risk_pde::bass::BassError;
use risk_pde::closed_forms::OracleError;
use risk_pde::{HjbError, OceError, SimError};

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Hjb(#[from] HjbError),
    #[error(transparent)]
    Oce(#[from] OceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Bass(#[from] BassError),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
}
