//! Counterdiabatic driving for Dicke-state preparation in a collective spin
//! with one-axis twisting.
//!
//! The pieces, bottom up: collective spin operators on the symmetric
//! subspace ([`spin_algebra`]), the chirped detuning and Rabi ramp
//! ([`drive`]), variational and exact adiabatic gauge potentials
//! ([`gauge`]), time evolution ([`dynamics`]) and the reproducible runs
//! built from them ([`experiments`]).

pub mod drive;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod gauge;
pub mod spin_algebra;

pub use drive::{DriveParams, DriveStage};
pub use dynamics::{evolve, initial_css, target_state, IntegratorConfig, StateVector, Trajectory};
pub use error::{Error, Result};
pub use experiments::RunConfig;
pub use gauge::{CorrectionScheme, StageControl, StageCorrection};
pub use spin_algebra::{OperatorMatrix, SpinBasis, SpinOperators};
