//! Closed-form interior problem: investment and consumption under habit
//! formation after entry, with the drift filtered from stock prices.

mod abc;
mod aux;
mod subsistence;
mod table;
mod value;

pub use abc::{abc_from_values, abc_ode_residual, c_as_printed, Abc, AbcCoefficients, AbcResidual};
pub use aux::{aux_ode_oracle, AuxConstants, AuxOdeSolutions, AuxValues};
pub use subsistence::SubsistenceCost;
pub use table::NTable;
pub use value::{
    HjbResidual, InteriorEvaluation, InteriorValue, NEval, NProfile, Policies, QuadratureSettings,
};

use crate::error::Result;
use crate::params::ModelConfig;

pub fn subsistence_cost(config: &ModelConfig) -> SubsistenceCost {
    SubsistenceCost::new(&config.habit, config.horizon())
}

pub fn aux_ode_solutions(config: &ModelConfig) -> Result<AuxOdeSolutions> {
    AuxOdeSolutions::new(config)
}
