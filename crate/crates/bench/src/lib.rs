// SPDX-License-Identifier: Apache-2.0

//! Fixtures shared by the benchmarks.

use sisnet_core::{sample_graph, EpidemicState, KernelSpec, Population, SampledGraph, ScalingFamily};

/// Homogeneous family kernels and a sampled graph at size `n`.
pub fn family_fixture(n: usize, alpha: f64, seed: u64) -> (KernelSpec, SampledGraph) {
    let k = ScalingFamily::standard(alpha).homogeneous(n, 0.7).expect("admissible family");
    let g = sample_graph(Population::homogeneous(n), &k.w_e, seed).expect("graph");
    (k, g)
}

pub fn all_infected(n: usize) -> EpidemicState {
    EpidemicState::from_flags(vec![true; n])
}
