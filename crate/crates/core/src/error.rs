use thiserror::Error;

use crate::params::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(ValidationReport),

    #[error("configuration parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("no information dynamics: lambda and sigma_mu are both zero")]
    NoInformationDynamics,

    #[error("degenerate constants: {0}")]
    DegenerateConstants(&'static str),

    #[error("wealth below subsistence cost at t={t}: x={x}, m(t)z={floor}")]
    BelowSubsistence { t: f64, x: f64, floor: f64 },

    #[error("time {t} outside [{lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("budget feasibility violated at t={t}")]
    BudgetViolation { t: f64 },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("PSOR did not converge at time slice {slice} after {iterations} iterations (residual {residual:e})")]
    PsorNonConvergence {
        slice: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("sweep: {0}")]
    Sweep(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("internal consistency failure: {0}")]
    Internal(String),
}
