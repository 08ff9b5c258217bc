//! Blockage prediction workbench: synthetic mmWave blockage traces,
//! recurrent any/all blockage predictors trained with truncated BPTT, and
//! meta-learned initializations for fast adaptation to new cells.

pub mod config;
pub mod container;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod nn;
pub mod scenario;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
