use crate::divergence::DivergenceError;
use crate::merge::MergeError;
use crate::pareto::ParetoError;
use crate::store::StoreError;
use crate::sweep::SweepError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error, one variant per subsystem.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Pareto(#[from] ParetoError),
}

impl Error {
    /// True when the failure came from the filesystem rather than the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Store(e) => e.is_io(),
            Error::Divergence(DivergenceError::Store(e)) => e.is_io(),
            Error::Sweep(e) => e.is_io(),
            Error::Pareto(e) => e.is_io(),
            _ => false,
        }
    }
}
