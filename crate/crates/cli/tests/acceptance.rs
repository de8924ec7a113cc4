// SPDX-License-Identifier: Apache-2.0

//! Acceptance criteria. Each test prints one `ACCEPTANCE <name>: PASS|FAIL`
//! line to the real stdout and then asserts. The tests share a lock so
//! their runtimes are measured without interference.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use sisnet_cli::commands::{aggregate, bias_fits, fluctuation_fits, sweep, Options};
use sisnet_cli::runner::{simulate_plan, RunOutput};
use sisnet_cli::{ExperimentConfig, Plan};
use sisnet_core::coupling::brute_force_on_table;
use sisnet_core::meanfield::solve_general_with;
use sisnet_core::stats::chi_square_two_sample;
use sisnet_core::{
    coupling_bound_report, equilibrium, replay_coupled, run, run_coupled, sample_graph, solve_homogeneous, solve_sbm,
    ArrowTable, CoupledConfig, EpidemicState, FeatureSpace, KernelSpec, MeasureSpec, PairFn, PointFn, Population,
    Quadrature, RecordGrid, SampledGraph, ScalingFamily, SimConfig, Stepping,
};

static SERIAL: Mutex<()> = Mutex::new(());

/// Endemic level `1 − γ/w` at `w = 3`, `γ = 0.7`.
const U_STAR: f64 = 23.0 / 30.0;

fn report(name: &str, pass: bool, detail: &str) {
    let line = format!("ACCEPTANCE {name}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "{name}: {detail}");
}

fn outputs(config: &str) -> (Plan, Vec<RunOutput>) {
    let plan = Plan::from_config(&ExperimentConfig::parse(config).unwrap()).unwrap();
    let out = simulate_plan(&plan, 20_240_601, Some(1), false).unwrap();
    (plan, out)
}

fn interval(m: usize) -> Quadrature {
    Quadrature::for_measure(&FeatureSpace::Interval01, &MeasureSpec::UniformOnSpace, m).unwrap()
}

#[test]
fn meanfield_analytics() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let st = Stepping::new(80.0, 1e-3);
    let rk4 = solve_general_with(&PairFn::Constant(3.0), &PointFn::Constant(0.7), &interval(1), &PointFn::Constant(1.0), st)
        .unwrap();
    let exact = solve_homogeneous(3.0, 0.7, 1.0, &rk4.times);
    let err = rk4.node_series(0).iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (r0, u) = equilibrium(3.0, 0.7).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = err < 1e-6
        && format!("{r0:.4}") == "4.2857"
        && format!("{u:.4}") == format!("{:.4}", 0.76667)
        && (r0 - 30.0 / 7.0).abs() < 1e-12
        && elapsed < 1.0;
    report("meanfield_analytics", pass, &format!("max |rk4 - closed| = {err:.2e}, R0 = {r0:.4}, u* = {u:.5}, {elapsed:.2} s"));
}

#[test]
fn reduction_chain() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    // Step size chosen so that RK4 truncation error is far below the tolerance.
    let st = Stepping::new(80.0, 5e-3);
    let general =
        solve_general_with(&PairFn::Constant(3.0), &PointFn::Constant(0.7), &interval(256), &PointFn::Constant(1.0), st)
            .unwrap();
    let sbm = solve_sbm(&[vec![0.5]], &[vec![6.0]], &[0.7], &[1.0], &[1.0], st).unwrap();
    let exact = solve_homogeneous(3.0, 0.7, 1.0, &general.times);
    let mut worst = [0.0f64; 3];
    for (r, e) in exact.iter().enumerate() {
        let s = sbm.row(r)[0];
        for g in general.row(r) {
            worst[0] = worst[0].max((g - s).abs());
            worst[1] = worst[1].max((g - e).abs());
        }
        worst[2] = worst[2].max((s - e).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = sbm.times == general.times && worst.iter().all(|w| *w <= 1e-8) && elapsed < 10.0;
    report(
        "reduction_chain",
        pass,
        &format!(
            "general-sbm {:.1e}, general-closed {:.1e}, sbm-closed {:.1e}, m = 256, {elapsed:.1} s",
            worst[0], worst[1], worst[2]
        ),
    );
}

#[test]
fn stochastic_convergence() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let common = "runs = 5\nn_list = [2000]\ngamma = 0.7\nu0 = 1\n";
    let (_, dense) = outputs(&format!(
        "scenario = \"custom\"\n{common}[model]\nkernel = \"constant\"\nw_e = 1\nw_i = 0.0015\n"
    ));
    let (_, sparse) = outputs(&format!("scenario = \"fig_cvg_left\"\nw_i_list = [1.2]\n{common}"));
    let dense_bias: Vec<f64> = dense.iter().map(|o| (o.summary.u_hat - U_STAR).abs()).collect();
    let sparse_bias: Vec<f64> = sparse.iter().map(|o| (o.summary.u_hat - U_STAR).abs()).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let complete = dense.iter().all(|o| o.components.edge_count == 2000 * 1999 / 2);
    let pass = complete && dense_bias.iter().all(|b| *b <= 0.03) && mean(&sparse_bias) > mean(&dense_bias);
    report(
        "stochastic_convergence",
        pass,
        &format!(
            "dense max bias {:.4}, dense mean {:.4}, w_I = 1.2 mean {:.4}, {:.0} s",
            dense_bias.iter().fold(0.0, |a: f64, b| a.max(*b)),
            mean(&dense_bias),
            mean(&sparse_bias),
            start.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn fluctuation_scaling() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (plan, out) =
        outputs("scenario = \"fig_tpl_std\"\nalpha_list = [0.3, 0.0]\nn_list = [2000, 8000, 32000]\nruns = 10\n");
    let fits = fluctuation_fits(&plan, &out).unwrap();
    let pass = fits.len() == 2 && fits.iter().all(|(_, r)| r.r_squared_fixed.is_some_and(|v| v >= 0.8));
    let detail: Vec<String> = fits
        .iter()
        .map(|(a, r)| format!("alpha {a}: R2_fixed {:.3}, free slope {:.3}", r.r_squared_fixed.unwrap_or(f64::NAN), r.slope))
        .collect();
    report("fluctuation_scaling", pass, &format!("{}, {:.0} s", detail.join("; "), start.elapsed().as_secs_f64()));
}

#[test]
fn bias_slope() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (plan, out) =
        outputs("scenario = \"fig_alpha_slopes\"\nalpha_list = [0.3]\nn_list = [2000, 6000, 20000, 60000]\nruns = 50\n");
    let (_, fit) = &bias_fits(&plan, &out).unwrap()[0];
    let pass = (-0.45..=-0.15).contains(&fit.slope) && fit.points == 200;
    report(
        "bias_slope",
        pass,
        &format!("slope {:.3}, R2 {:.3}, {} runs, {:.0} s", fit.slope, fit.r_squared_fit, fit.points, start.elapsed().as_secs_f64()),
    );
}

#[test]
fn coupling_bound() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let n = 2000;
    let k = ScalingFamily::standard(0.3).homogeneous(n, 0.7).unwrap();
    let mut violations = 0u64;
    let mut worst_margin = f64::INFINITY;
    for r in 0..20u64 {
        let g = sample_graph(Population::homogeneous(n), &k.w_e, 700 + r).unwrap();
        let rec = run_coupled(&g, &k, &EpidemicState::from_flags(vec![true; n]), &CoupledConfig::new(80.0, RecordGrid::Step(1.0), r))
            .unwrap();
        violations += rec.domination_violations;
        let fog_t = rec.final_fog as f64 / n as f64;
        worst_margin = worst_margin.min(fog_t - rec.sup_disagreement);
        if rec.sup_disagreement > fog_t {
            violations += 1;
        }
    }

    // Dense family: w_E = 1/2 and n w_E w_I = 3.
    let n = 500;
    let kd = KernelSpec::constant(0.5, 3.0 / (0.5 * n as f64), 0.7).unwrap();
    let recs: Vec<_> = (0..20u64)
        .map(|r| {
            let g = sample_graph(Population::homogeneous(n), &kd.w_e, 900 + r).unwrap();
            run_coupled(&g, &kd, &EpidemicState::from_flags(vec![true; n]), &CoupledConfig::new(0.5, RecordGrid::Step(0.05), r))
                .unwrap()
        })
        .collect();
    let rep = coupling_bound_report(&recs, &kd, &Population::homogeneous(n).features).unwrap();
    let c_w: f64 = 3.0;
    let c_t = 4.0 * 0.5 * 1.0 * c_w * (c_w * 0.5).exp();
    let bound = c_t * (3.0 / 250.0);
    let pass = violations == 0 && (rep.c_t - c_t).abs() < 1e-9 * c_t && rep.mean_sup_d <= bound && rep.bound_satisfied;
    report(
        "coupling_bound",
        pass,
        &format!(
            "domination violations {violations}, min (Xi_T/n - sup d) {worst_margin:.4}; dense mean sup d {:.5} <= C_T I_n = {bound:.4}, {:.0} s",
            rep.mean_sup_d,
            start.elapsed().as_secs_f64()
        ),
    );
}

fn complete(n: usize) -> SampledGraph {
    let edges: Vec<(u32, u32)> = (1..n as u32).flat_map(|j| (0..j).map(move |i| (i, j))).collect();
    SampledGraph::from_edges(Population::homogeneous(n), &edges).unwrap()
}

#[test]
fn oracle_equivalence() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut mismatches = 0;
    for seed in 0..100u64 {
        let k = KernelSpec::constant(0.4, 0.8, 0.6).unwrap();
        let g = sample_graph(Population::homogeneous(8), &k.w_e, seed).unwrap();
        let state = EpidemicState::from_flags((0..8).map(|i| i % 3 == 0).collect());
        let cfg = CoupledConfig::new(2.0, RecordGrid::Step(0.5), 5_000 + seed).keep_events(true);
        let table = ArrowTable::sample(&g, &k, cfg.t_max, cfg.seed).unwrap();
        let a = replay_coupled(&g, &k, &state, &table, &cfg).unwrap();
        let b = brute_force_on_table(&g, &k, &state, &table, &cfg).unwrap();
        if a.events != b.events || a.events.as_ref().is_none_or(|e| e.is_empty()) {
            mismatches += 1;
        }
    }

    let n = 64;
    let (we, wi, gamma) = (0.3, 0.1, 0.7);
    let k = KernelSpec::constant(we, wi, gamma).unwrap();
    let kc = KernelSpec::constant(1.0, we * wi, gamma).unwrap();
    let kn = complete(n);
    let state = EpidemicState::from_flags((0..n).map(|i| i % 2 == 0).collect());
    let runs = 100_000u64;
    let mut tilde = vec![0u64; n + 1];
    let mut plain = vec![0u64; n + 1];
    for s in 0..runs {
        let g = sample_graph(Population::homogeneous(n), &k.w_e, 3 * runs + s).unwrap();
        tilde[run_coupled(&g, &k, &state, &CoupledConfig::new(1.0, RecordGrid::Times(vec![1.0]), s)).unwrap().tilde_infected()] += 1;
        let tr = run(&kn, &kc, &state, &SimConfig::new(1.0, RecordGrid::Times(vec![1.0]), 7 * runs + s)).unwrap();
        plain[tr.final_state.iter().filter(|b| **b).count()] += 1;
    }
    let chi = chi_square_two_sample(&tilde, &plain).unwrap();
    let pass = mismatches == 0 && chi.p_value > 0.01;
    report(
        "oracle_equivalence",
        pass,
        &format!(
            "n = 8: {mismatches}/100 log mismatches; n = 64: chi2 = {:.1} on {} dof, p = {:.3}, {:.0} s",
            chi.statistic,
            chi.dof,
            chi.p_value,
            start.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn very_sparse_breakdown() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (plan, out) = outputs("scenario = \"fig_sparse_left\"\nn_list = [8000, 32000]\nruns = 10\n");
    let mut pass = true;
    let mut detail = Vec::new();
    for p in &plan.points {
        let rows: Vec<&RunOutput> = out.iter().filter(|o| o.entry.point == p.tag).collect();
        let a = aggregate(&rows);
        let v = a.mean_v_hat.unwrap_or(f64::NAN);
        pass &= a.mean_u_hat <= U_STAR - 0.05 && a.mean_u_hat < v && v < U_STAR;
        detail.push(format!("n {}: u {:.4}, v_giant {:.4}", p.n, a.mean_u_hat, v));
    }
    report(
        "very_sparse_breakdown",
        pass,
        &format!("{}, u* {U_STAR:.4}, {:.0} s", detail.join("; "), start.elapsed().as_secs_f64()),
    );
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn determinism() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let tail = "runs = 4\nt_max = 30\nwindow = [10, 30]\n";
    let configs = [
        format!("scenario = \"fig_alpha_slopes\"\nalpha_list = [0.0, 0.3]\nn_list = [500, 1500]\n{tail}"),
        format!("scenario = \"fig_tpl_std\"\nn_list = [400, 800]\n{tail}"),
        format!("scenario = \"fig_sparse_left\"\nn_list = [1000, 3000]\n{tail}"),
        format!("scenario = \"fig_sparse_right\"\nw_i_list = [0.5, 3.0]\n{tail}"),
        format!("scenario = \"custom\"\nn_list = [600]\n{tail}[model]\nkernel = \"geometric\"\nradius = 0.1\nw_i = 0.03\n"),
    ];
    let dir = tempfile::TempDir::new().unwrap();
    let mut compared = 0;
    let mut identical = true;
    for (i, text) in configs.iter().enumerate() {
        let cfg = ExperimentConfig::parse(text).unwrap();
        let mut results = Vec::new();
        for threads in [1usize, 3] {
            let out = dir.path().join(format!("c{i}_t{threads}"));
            sweep(&cfg, &Options { seed: 77, out: out.clone(), threads: Some(threads), oracle: false }).unwrap();
            results.push(csv_bytes(&out));
        }
        compared += results[0].len();
        identical &= !results[0].is_empty() && results[0] == results[1];
    }
    report(
        "determinism",
        identical,
        &format!("{compared} CSV files from 5 sweeps byte-identical at 1 and 3 threads, {:.1} s", start.elapsed().as_secs_f64()),
    );
}
