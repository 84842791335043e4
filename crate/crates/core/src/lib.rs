//! Likelihood-free frequentist inference: odds-based test statistics
//! estimated from simulations, critical values and p-values calibrated by
//! regression across the parameter space, Neyman inversion into confidence
//! sets, nuisance-parameter handling and conditional coverage diagnostics.

pub mod calibration;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod inference;
pub mod learners;
pub mod numeric;
pub mod odds;
pub mod rng;
pub mod simulators;
pub mod space;
pub mod statistics;

pub use error::{Error, Result};
