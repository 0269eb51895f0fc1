//! Learning and certifying almost-barrier functions for learned path-tracking controllers.

pub mod adversarial;
pub mod barrier;
pub mod certify;
pub mod cli;
pub mod config;
pub mod controllers;
pub mod error;
pub mod geometry;
pub mod io;
pub mod monitor;
pub mod obs;
pub mod pipeline;
pub mod sampling;
pub mod seeds;
pub mod study;
pub mod vehicle;

pub use error::{Error, Result};
