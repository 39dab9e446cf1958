//! Wolf-attack analysis for biometric-style matchers over bit-string and
//! score-model populations.

pub mod cli;
pub mod distfit;
pub mod error;
pub mod matcher;
pub mod population;
pub mod scenarios;
pub mod secmetrics;
pub mod sum;
pub mod template;

pub use error::{Error, Result};
