// SPDX-License-Identifier: Apache-2.0

//! Distributional checks of the event-driven simulator against closed forms.

use sisnet_core::sis::EventKind;
use sisnet_core::stats::temporal_summary;
use sisnet_core::{init_state, run, EpidemicState, KernelSpec, PointFn, Population, RecordGrid, SampledGraph, SimConfig};

fn pair_graph() -> SampledGraph {
    SampledGraph::from_edges(Population::homogeneous(2), &[(0, 1)]).unwrap()
}

/// One infected and one susceptible vertex joined by an edge: the first
/// event is a recovery with probability γ/(γ + w) after an Exp(γ + w) wait.
#[test]
fn two_vertex_first_event_law() {
    let (w, gamma) = (1.3, 0.7);
    let k = KernelSpec::constant(1.0, w, gamma).unwrap();
    let g = pair_graph();
    let start = EpidemicState::from_flags(vec![true, false]);
    let runs = 100_000;
    let mut recoveries = 0usize;
    let mut times = Vec::with_capacity(runs);
    for seed in 0..runs as u64 {
        let cfg = SimConfig::new(50.0, RecordGrid::Times(vec![0.0]), seed).keep_events(true);
        let tr = run(&g, &k, &start, &cfg).unwrap();
        let first = tr.events.as_ref().unwrap()[0];
        if first.kind == EventKind::Recovery {
            assert_eq!(first.vertex, 0);
            recoveries += 1;
        } else {
            assert_eq!(first.vertex, 1);
        }
        times.push(first.t);
    }
    let p = gamma / (gamma + w);
    let sd = (p * (1.0 - p) / runs as f64).sqrt();
    let phat = recoveries as f64 / runs as f64;
    assert!((phat - p).abs() <= 3.0 * sd, "recovery share {phat} vs {p}");

    // Kolmogorov–Smirnov distance to Exp(γ + w).
    times.sort_by(f64::total_cmp);
    let rate = gamma + w;
    let m = runs as f64;
    let d = times
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let f = 1.0 - (-rate * t).exp();
            (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
        })
        .fold(0.0, f64::max);
    // 1.95/√m is the 0.1% critical value.
    assert!(d < 1.95 / m.sqrt(), "KS distance {d}");
}

#[test]
fn isolated_recovery_time_is_unit_exponential() {
    let g = SampledGraph::from_edges(Population::homogeneous(1), &[]).unwrap();
    let k = KernelSpec::constant(0.0, 0.0, 1.0).unwrap();
    let start = EpidemicState::from_flags(vec![true]);
    let runs = 10_000;
    let mut total = 0.0;
    for seed in 0..runs {
        let tr = run(&g, &k, &start, &SimConfig::new(1e6, RecordGrid::Times(vec![0.0]), seed)).unwrap();
        total += tr.absorbed_at.expect("the only vertex recovers");
    }
    let mean = total / runs as f64;
    assert!((0.97..=1.03).contains(&mean), "mean recovery time {mean}");
}

#[test]
fn grid_refinement_does_not_change_exact_summary() {
    let pop = Population::homogeneous(400);
    let k = KernelSpec::constant(0.02, 0.5, 0.6).unwrap();
    let g = sisnet_core::sample_graph(pop.clone(), &k.w_e, 5).unwrap();
    let start = init_state(&pop, &PointFn::Constant(0.5), 6).unwrap();
    let coarse = run(&g, &k, &start, &SimConfig::new(30.0, RecordGrid::Step(5.0), 7).keep_events(true)).unwrap();
    let fine = run(&g, &k, &start, &SimConfig::new(30.0, RecordGrid::Step(0.01), 7).keep_events(true)).unwrap();
    let a = temporal_summary(&coarse, (10.0, 30.0)).unwrap();
    let b = temporal_summary(&fine, (10.0, 30.0)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn constant_initial_conditions() {
    let pop = Population::homogeneous(50);
    let g = SampledGraph::from_edges(pop.clone(), &[]).unwrap();
    let k = KernelSpec::constant(0.0, 1.0, 0.5).unwrap();
    let none = init_state(&pop, &PointFn::Constant(0.0), 1).unwrap();
    let tr = run(&g, &k, &none, &SimConfig::new(80.0, RecordGrid::Step(1.0), 1).with_window(20.0, 80.0)).unwrap();
    assert_eq!(tr.event_count, 0);
    let s = temporal_summary(&tr, (20.0, 80.0)).unwrap();
    assert_eq!((s.u_hat, s.sigma_hat), (0.0, 0.0));
}
