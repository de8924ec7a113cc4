// SPDX-License-Identifier: Apache-2.0

//! SIS epidemics on kernel-sampled random graphs.
//!
//! Populations carry features; connection density `w_E`, infection rate
//! `w_I` and recovery rate `γ` are kernels on features. The crate samples
//! graphs, simulates the epidemic exactly, couples it to its complete-graph
//! counterpart, and solves the deterministic limit equation.

pub mod coupling;
pub mod error;
pub mod feature;
pub mod graph;
pub mod io;
pub mod kernel;
pub mod meanfield;
pub mod quadrature;
pub mod rng;
pub mod sis;
pub mod stats;
pub mod sumtree;

pub use coupling::{
    brute_force_coupled, coupling_bound_report, replay_coupled, run_coupled, ArrowTable, BoundReport,
    CoupledConfig, CoupledRecord,
};
pub use error::{Error, Result};
pub use feature::{sample_features, Feature, FeatureSpace, MeasureSpec, Population};
pub use graph::{giant_component, sample_graph, SampledGraph};
pub use kernel::{KernelSpec, KernelTag, ModelSpec, PairFn, PointFn, Scaling, ScalingFamily};
pub use meanfield::{equilibrium, solve_general, solve_homogeneous, solve_sbm, MeanFieldSolution, Stepping};
pub use quadrature::Quadrature;
pub use sis::{infected_fraction, init_state, run, EpidemicState, RecordGrid, SimConfig, Trajectory};
pub use stats::{fluctuation_scaling, loglog_regression, temporal_summary, RegressionResult, TemporalSummary};
