//! Steady-state phonon cooling and entanglement of a driven, dipole-coupled
//! qubit pair longitudinally coupled to a damped thermal boson mode.

pub mod config;
pub mod entanglement;
pub mod error;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod pipeline;
pub mod reduced;
pub mod selftest;
pub mod sweep;
pub mod validation;

pub use error::{BasisTag, Error, Result};
pub use model::{DressedBasis, Model, RateConvention, RateTable, SystemParams};
