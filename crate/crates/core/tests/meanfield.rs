// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use sisnet_core::meanfield::{solve_general_with, Stepping};
use sisnet_core::{solve_general, solve_homogeneous, solve_sbm, FeatureSpace, MeasureSpec, PairFn, PointFn, Quadrature};

fn interval(m: usize) -> Quadrature {
    Quadrature::for_measure(&FeatureSpace::Interval01, &MeasureSpec::UniformOnSpace, m).unwrap()
}

#[test]
fn rk4_tracks_logistic_on_long_horizon() {
    let s = solve_general(&PairFn::Constant(3.0), &PointFn::Constant(0.7), &interval(1), &PointFn::Constant(1.0), 80.0, 1e-3).unwrap();
    let exact = solve_homogeneous(3.0, 0.7, 1.0, &s.times);
    let worst = s.node_series(0).iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn heterogeneous_kernel_stays_in_unit_interval() {
    let w = PairFn::custom(6.0, |x, y| {
        let (a, b) = (x.coords().unwrap()[0], y.coords().unwrap()[0]);
        6.0 * (1.0 - (a - b).abs())
    });
    let gamma = PointFn::custom(1.0, |x| 0.2 + 0.8 * x.coords().unwrap()[0]);
    let s = solve_general_with(&w, &gamma, &interval(32), &PointFn::Constant(0.05), Stepping::new(20.0, 0.01).with_stride(100)).unwrap();
    for r in 0..s.times.len() {
        assert!(s.row(r).iter().all(|v| (0.0..=1.0).contains(v)));
    }
    // Vertices that recover slowly are infected more often at equilibrium.
    let last = s.last();
    assert!(last[0] > last[31]);
}

#[test]
fn sbm_one_class_matches_general() {
    let st = Stepping::new(10.0, 1e-3);
    let a = solve_sbm(&[vec![0.25]], &[vec![12.0]], &[0.7], &[1.0], &[0.4], st).unwrap();
    let b = solve_general_with(&PairFn::Constant(3.0), &PointFn::Constant(0.7), &interval(4), &PointFn::Constant(0.4), st).unwrap();
    for r in 0..a.times.len() {
        for v in b.row(r) {
            assert!((a.row(r)[0] - v).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn values_stay_in_unit_interval(w in 0.0f64..6.0, g in 0.0f64..3.0, u0 in 0.0f64..=1.0) {
        let s = solve_general_with(&PairFn::Constant(w), &PointFn::Constant(g), &interval(2), &PointFn::Constant(u0), Stepping::new(20.0, 1e-2)).unwrap();
        for r in 0..s.times.len() {
            for v in s.row(r) {
                prop_assert!((-1e-9..=1.0 + 1e-9).contains(v));
            }
        }
    }

    #[test]
    fn closed_form_matches_fine_rk4(w in 0.1f64..5.0, g in 0.0f64..3.0, u0 in 0.01f64..=1.0) {
        let s = solve_general_with(&PairFn::Constant(w), &PointFn::Constant(g), &interval(1), &PointFn::Constant(u0), Stepping::new(2.0, 1e-3)).unwrap();
        let exact = solve_homogeneous(w, g, u0, &s.times);
        for (r, e) in exact.iter().enumerate() {
            prop_assert!((s.row(r)[0] - e).abs() < 1e-9);
        }
    }
}
