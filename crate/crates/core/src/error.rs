use thiserror::Error;

use crate::baselines::TrainError;
use crate::datagen::DatagenError;
use crate::empirical::EmpiricalError;
use crate::factors::FactorError;
use crate::io::IoError;
use crate::linalg::LinalgError;
use crate::mappings::MappingError;
use crate::metrics::MetricsError;
use crate::swe::SweError;

/// Any failure of an experiment run, tagged with the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("linalg: {0}")]
    Linalg(#[from] LinalgError),
    #[error("mappings: {0}")]
    Mapping(#[from] MappingError),
    #[error("empirical: {0}")]
    Empirical(#[from] EmpiricalError),
    #[error("baselines: {0}")]
    Train(#[from] TrainError),
    #[error("datagen: {0}")]
    Datagen(#[from] DatagenError),
    #[error("swe: {0}")]
    Swe(#[from] SweError),
    #[error("factors: {0}")]
    Factor(#[from] FactorError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("io: {0}")]
    Io(#[from] IoError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
