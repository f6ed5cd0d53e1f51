//! Second-moment Mendelian randomization on the genetic relatedness matrix,
//! with the classic summary-statistics estimators, a four-group simulation
//! engine, closed-form oracles and a replication harness.

pub mod error;
pub mod genotype;
pub mod harness;
pub mod pipeline;
pub mod rng;
pub mod estimators;
pub mod simgen;
pub mod sumstats;
pub mod theory;
pub mod tsre;

pub use error::{Error, Result};
