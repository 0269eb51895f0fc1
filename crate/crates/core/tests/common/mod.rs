//! Oracles shared by the integration and acceptance tests.

#![allow(dead_code)]

pub mod checks;
pub mod cli;
pub mod monitor;
