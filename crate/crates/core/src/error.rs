use core::fmt;

use crate::qubit::BasisId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Identifies one row `N_{i,·}^{(α,β)}` of a count table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowLabel {
    pub prepared: BasisId,
    pub bit: u8,
    pub measured: BasisId,
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "prepared {:?}/{} measured {:?}",
            self.prepared, self.bit, self.measured
        )
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input `{name}`: {reason}")]
    InvalidInput {
        name: &'static str,
        reason: &'static str,
    },
    #[error("qubit state is not normalized (|a0|^2 + |a1|^2 = {norm_sqr})")]
    InvalidState { norm_sqr: f64 },
    #[error("no detection events in row ({row})")]
    NoData { row: RowLabel },
    #[error("configuration error: {0}")]
    Config(&'static str),
}

impl Error {
    pub(crate) const fn input(name: &'static str, reason: &'static str) -> Self {
        Error::InvalidInput { name, reason }
    }
}
