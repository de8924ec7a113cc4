// SPDX-License-Identifier: Apache-2.0

//! Configuration, scenario recipes and commands of the `sisnet` driver.

pub mod commands;
pub mod config;
pub mod runner;
pub mod scenario;

pub use commands::{couple, meanfield, simulate, sweep, Options};
pub use config::{ConfigError, ExperimentConfig, Scenario};
pub use scenario::{Plan, Point, Recipe};
