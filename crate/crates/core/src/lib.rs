//! Berry phases and Wilczek–Zee holonomies of coupled angular momenta in a
//! conically rotating magnetic field or electric-field gradient.

pub mod error;
pub mod operators;
pub mod spin_algebra;
pub mod adiabatic;
pub mod analytic_oracle;
pub mod berry_engine;
pub mod cli;
pub mod systems;

pub use error::{Error, Result};
