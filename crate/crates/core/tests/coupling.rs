// SPDX-License-Identifier: Apache-2.0

//! Marginal laws, oracle agreement and bound checks of the coupled runs.

use sisnet_core::coupling::{brute_force_coupled, brute_force_on_table, ArrowTable};
use sisnet_core::stats::chi_square_two_sample;
use sisnet_core::{
    coupling_bound_report, replay_coupled, run, run_coupled, sample_graph, CoupledConfig, EpidemicState, KernelSpec,
    Population, RecordGrid, SampledGraph, ScalingFamily, SimConfig,
};

fn histogram(counts: impl Iterator<Item = usize>, bins: usize) -> Vec<u64> {
    let mut h = vec![0u64; bins];
    for c in counts {
        h[c] += 1;
    }
    h
}

fn complete(n: usize) -> SampledGraph {
    let mut e = Vec::new();
    for j in 1..n as u32 {
        for i in 0..j {
            e.push((i, j));
        }
    }
    SampledGraph::from_edges(Population::homogeneous(n), &e).unwrap()
}

#[test]
fn replay_and_brute_force_logs_agree() {
    for seed in 0..100u64 {
        let k = KernelSpec::constant(0.35, 0.9, 0.5).unwrap();
        let g = sample_graph(Population::homogeneous(8), &k.w_e, seed).unwrap();
        let state = EpidemicState::from_flags((0..8).map(|i| i < 3).collect());
        let cfg = CoupledConfig::new(2.0, RecordGrid::Step(0.25), 1_000 + seed).keep_events(true);
        let table = ArrowTable::sample(&g, &k, cfg.t_max, cfg.seed).unwrap();
        let fast = replay_coupled(&g, &k, &state, &table, &cfg).unwrap();
        let oracle = brute_force_on_table(&g, &k, &state, &table, &cfg).unwrap();
        assert_eq!(fast.events, oracle.events, "seed {seed}");
        assert_eq!(fast.eta_final, oracle.eta_final);
        assert_eq!(fast.tilde_final, oracle.tilde_final);
    }
}

/// The thinned streams of the fast simulator and the explicit Poisson
/// tables must give `η̃` the same law.
#[test]
fn fast_and_brute_force_tilde_laws_agree() {
    let n = 6;
    let k = KernelSpec::constant(0.5, 1.0, 0.8).unwrap();
    let g = sample_graph(Population::homogeneous(n), &k.w_e, 3).unwrap();
    let state = EpidemicState::from_flags(vec![true, true, false, false, false, false]);
    let runs = 100_000u64;
    let mut fast = vec![0u64; n + 1];
    let mut slow = vec![0u64; n + 1];
    let mut fast_fog = vec![0u64; n + 1];
    let mut slow_fog = vec![0u64; n + 1];
    for seed in 0..runs {
        let cfg = CoupledConfig::new(1.0, RecordGrid::Times(vec![1.0]), seed);
        let a = run_coupled(&g, &k, &state, &cfg).unwrap();
        let b = brute_force_coupled(&g, &k, &state, &CoupledConfig { seed: seed + runs, ..cfg }).unwrap();
        fast[a.tilde_infected()] += 1;
        slow[b.tilde_infected()] += 1;
        fast_fog[a.final_fog] += 1;
        slow_fog[b.final_fog] += 1;
    }
    let p = chi_square_two_sample(&fast, &slow).unwrap().p_value;
    assert!(p > 0.01, "tilde law p = {p}");
    let p = chi_square_two_sample(&fast_fog, &slow_fog).unwrap().p_value;
    assert!(p > 0.01, "fog law p = {p}");
}

/// `η` inside the coupling is the plain epidemic on the same graph.
#[test]
fn eta_marginal_matches_plain_simulation() {
    let n = 64;
    let k = KernelSpec::constant(0.15, 0.6, 0.7).unwrap();
    let g = sample_graph(Population::homogeneous(n), &k.w_e, 17).unwrap();
    let state = EpidemicState::from_flags(vec![true; n]);
    let runs = 20_000u64;
    let coupled = (0..runs).map(|s| {
        run_coupled(&g, &k, &state, &CoupledConfig::new(1.0, RecordGrid::Times(vec![1.0]), s)).unwrap().eta_infected()
    });
    let a = histogram(coupled, n + 1);
    let plain = (0..runs).map(|s| {
        run(&g, &k, &state, &SimConfig::new(1.0, RecordGrid::Times(vec![1.0]), 10 * runs + s)).unwrap().final_state.iter().filter(|b| **b).count()
    });
    let b = histogram(plain, n + 1);
    let p = chi_square_two_sample(&a, &b).unwrap().p_value;
    assert!(p > 0.01, "p = {p}");
}

/// `η̃` is an epidemic on the complete graph with rate `w_E w_I`.
#[test]
fn tilde_marginal_is_complete_graph_epidemic() {
    let n = 32;
    let (we, wi, gamma) = (0.3, 0.4, 0.7);
    let k = KernelSpec::constant(we, wi, gamma).unwrap();
    let kc = KernelSpec::constant(1.0, we * wi, gamma).unwrap();
    let kn = complete(n);
    let state = EpidemicState::from_flags((0..n).map(|i| i % 2 == 0).collect());
    let runs = 20_000u64;
    let coupled = (0..runs).map(|s| {
        let g = sample_graph(Population::homogeneous(n), &k.w_e, 5 * runs + s).unwrap();
        run_coupled(&g, &k, &state, &CoupledConfig::new(1.0, RecordGrid::Times(vec![1.0]), s)).unwrap().tilde_infected()
    });
    let a = histogram(coupled, n + 1);
    let plain = (0..runs).map(|s| {
        run(&kn, &kc, &state, &SimConfig::new(1.0, RecordGrid::Times(vec![1.0]), 10 * runs + s)).unwrap().final_state.iter().filter(|b| **b).count()
    });
    let b = histogram(plain, n + 1);
    let p = chi_square_two_sample(&a, &b).unwrap().p_value;
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn disagreement_shrinks_with_n() {
    let mut means = Vec::new();
    let mut i_ns = Vec::new();
    for n in [2_000usize, 20_000] {
        let k = ScalingFamily::standard(0.3).homogeneous(n, 0.7).unwrap();
        let recs: Vec<_> = (0..20u64)
            .map(|r| {
                let g = sample_graph(Population::homogeneous(n), &k.w_e, 40 + r).unwrap();
                let rec = run_coupled(&g, &k, &EpidemicState::from_flags(vec![true; n]), &CoupledConfig::new(1.0, RecordGrid::Step(0.1), r))
                    .unwrap();
                assert_eq!(rec.domination_violations, 0);
                rec
            })
            .collect();
        let rep = coupling_bound_report(&recs, &k, &Population::homogeneous(n).features).unwrap();
        means.push(rep.mean_sup_d);
        i_ns.push(rep.i_n);
    }
    assert!(means[1] < means[0]);
    let observed = means[1] / means[0];
    let predicted = i_ns[1] / i_ns[0];
    assert!(observed / predicted < 3.0 && predicted / observed < 3.0, "{observed} vs {predicted}");
}

#[test]
fn bound_report_serializes_expected_fields() {
    let n = 200;
    let k = KernelSpec::constant(0.5, 0.03, 0.7).unwrap();
    let recs: Vec<_> = (0..10u64)
        .map(|r| {
            let g = sample_graph(Population::homogeneous(n), &k.w_e, r).unwrap();
            run_coupled(&g, &k, &EpidemicState::from_flags(vec![true; n]), &CoupledConfig::new(0.5, RecordGrid::Step(0.1), r)).unwrap()
        })
        .collect();
    let rep = coupling_bound_report(&recs, &k, &Population::homogeneous(n).features).unwrap();
    let v = serde_json::to_value(&rep).unwrap();
    for key in ["n", "T", "I_n", "C_T", "mean_sup_d", "stderr", "bound_satisfied"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    approx::assert_relative_eq!(rep.c_t, 4.0 * 0.5 * 1.0 * 3.0 * (1.5f64).exp(), max_relative = 1e-12);
}
