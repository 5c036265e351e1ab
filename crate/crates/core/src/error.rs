use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
///
/// Variants split into two families: input problems (bad configuration,
/// malformed files, invalid parameters) and numerical failures (singular
/// rates, non-finite integrands, degenerate tables). [`Error::is_numerical`]
/// tells them apart; the command-line front end maps them to exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("density evaluation requested for a Dirac mass at {atom}")]
    DiracDensity { atom: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid quadrature specification: {0}")]
    InvalidQuadrature(String),

    #[error("integrand returned a non-finite value at {at}")]
    NonFiniteIntegrand { at: f64 },

    #[error("invalid journey specification: {0}")]
    InvalidJourney(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("attendance value {value} is negative beyond rounding tolerance")]
    NegativeAttendance { value: f64 },

    #[error("survival or distribution function {value:e} too small for the risk term at x = {x}")]
    SingularRisk { x: f64, value: f64 },

    #[error("negative Poisson rate {rate} for journey {journey}")]
    NegativeRate { journey: usize, rate: f64 },

    #[error("journey {journey} has zero trips on day {day}")]
    ZeroPopulation { journey: usize, day: u64 },

    #[error(
        "zero expected rate with positive count {count} at time step {step}, counter {counter}"
    )]
    ZeroRateWithPositiveCount {
        step: usize,
        counter: usize,
        count: u64,
    },

    #[error("expected passage rate vanishes at x = {x}, time step {step}")]
    SingularAttendance { x: f64, step: usize },

    #[error("journey {journey} has zero total attendance over the observation grid")]
    DegenerateAttendance { journey: usize },

    #[error("not enough informative iterations to fit a convergence rate ({usable} usable)")]
    InsufficientIterations { usable: usize },

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteIntegrand { .. }
                | Error::NegativeAttendance { .. }
                | Error::SingularRisk { .. }
                | Error::NegativeRate { .. }
                | Error::ZeroPopulation { .. }
                | Error::ZeroRateWithPositiveCount { .. }
                | Error::SingularAttendance { .. }
                | Error::DegenerateAttendance { .. }
                | Error::InsufficientIterations { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
