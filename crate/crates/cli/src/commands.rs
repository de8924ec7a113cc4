// SPDX-License-Identifier: Apache-2.0

//! `simulate`, `sweep`, `meanfield` and `couple`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use rayon::prelude::*;
use serde::Serialize;
use sisnet_core::coupling::brute_force_on_table;
use sisnet_core::io::{write_components, write_coupled, write_summary, ComponentsRow, SummaryRow};
use sisnet_core::meanfield::solve_general_with;
use sisnet_core::rng::label;
use sisnet_core::stats::mean_stderr;
use sisnet_core::{
    coupling_bound_report, equilibrium, fluctuation_scaling, init_state, loglog_regression, replay_coupled,
    run_coupled, solve_homogeneous, solve_sbm, ArrowTable, BoundReport, CoupledConfig, KernelSpec, PairFn, PointFn,
    Quadrature, RecordGrid, RegressionResult, Stepping,
};

use crate::config::{ExperimentConfig, KernelKind, Scenario, ScalingKind};
use crate::runner::{realize, run_seed, simulate_plan, sub_seed, with_pool, RunEntry, RunOutput};
use crate::scenario::{custom_transmission, Plan, Point, Recipe};

/// Largest population accepted by `couple`.
pub const COUPLE_MAX_N: usize = 20_000;

pub const POINTS_HEADER: &str = "point,n,alpha,w_i,w_e,u_star,runs,mean_u_hat,stderr_u_hat,mean_sigma_hat,u_lo,u_hi,\
mean_v_hat_giant,mean_sigma_hat_giant,v_lo,v_hi,mean_abs_bias,mean_giant_fraction";
pub const FLUCTUATION_HEADER: &str = "alpha,slope,intercept,r_squared_fit,r_squared_fixed,points";
pub const ALPHA_SLOPES_HEADER: &str = "alpha,slope,intercept,r_squared_fit,r_squared_fixed,points";
pub const COUPLED_SUMMARY_HEADER: &str =
    "point,n,run_index,sup_disagreement,final_fog,final_roots,domination_violations,gating_violations,event_count";

/// Command-line options shared by all commands.
#[derive(Clone, Debug)]
pub struct Options {
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub oracle: bool,
}

#[derive(Serialize)]
struct Manifest<'a, R: Serialize> {
    software: &'static str,
    version: &'static str,
    command: &'a str,
    scenario: &'a str,
    config_hash: String,
    master_seed: u64,
    threads: Option<usize>,
    seed_derivation: &'static str,
    files: Vec<String>,
    runs: Vec<R>,
}

const SEED_DERIVATION: &str = "run = derive(master, [fnv(scenario), n, point_key_bits, run_index]); \
features/graph/init/sis/coupled = derive(run, [fnv(name)])";

fn write_manifest<R: Serialize>(cfg: &ExperimentConfig, opts: &Options, command: &str, files: &[PathBuf], runs: Vec<R>) -> anyhow::Result<PathBuf> {
    let m = Manifest {
        software: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        scenario: cfg.scenario.name(),
        config_hash: format!("{:016x}", label(&cfg.source)),
        master_seed: opts.seed,
        threads: opts.threads,
        seed_derivation: SEED_DERIVATION,
        files: files.iter().map(|p| rel(&opts.out, p)).collect(),
        runs,
    };
    let path = opts.out.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&m)?)?;
    Ok(path)
}

fn rel(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).display().to_string()
}

fn create(path: &Path) -> anyhow::Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn write_rows(path: &Path, header: &str, rows: &[String]) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{header}")?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    w.flush()?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write_common(opts: &Options, outputs: &[RunOutput], files: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let summary: Vec<SummaryRow> = outputs.iter().map(|o| o.summary.clone()).collect();
    let components: Vec<ComponentsRow> = outputs.iter().map(|o| o.components.clone()).collect();
    let p = opts.out.join("summary.csv");
    let mut w = create(&p)?;
    write_summary(&summary, &mut w)?;
    w.flush()?;
    files.push(p);
    let p = opts.out.join("components.csv");
    let mut w = create(&p)?;
    write_components(&components, &mut w)?;
    w.flush()?;
    files.push(p);
    Ok(())
}

fn prepare(cfg: &ExperimentConfig, opts: &Options) -> anyhow::Result<Plan> {
    let plan = Plan::from_config(cfg)?;
    fs::create_dir_all(&opts.out).with_context(|| format!("cannot create {}", opts.out.display()))?;
    Ok(plan)
}

/// Trajectory, summary and component CSVs for every replicate.
pub fn simulate(cfg: &ExperimentConfig, opts: &Options) -> anyhow::Result<Vec<PathBuf>> {
    let plan = prepare(cfg, opts)?;
    let keep = cfg.trajectories.unwrap_or(true);
    let outputs = simulate_plan(&plan, opts.seed, opts.threads, keep)?;
    let mut files = Vec::new();
    if keep {
        let dir = opts.out.join("trajectories");
        fs::create_dir_all(&dir)?;
        for o in &outputs {
            let p = dir.join(format!("traj_{}_run{}.csv", o.entry.point, o.entry.run_index));
            fs::write(&p, o.trajectory_csv.as_deref().unwrap_or_default())?;
            files.push(p);
        }
    }
    write_common(opts, &outputs, &mut files)?;
    let entries: Vec<RunEntry> = outputs.into_iter().map(|o| o.entry).collect();
    files.push(write_manifest(cfg, opts, "simulate", &files, entries)?);
    Ok(files)
}

/// Per-point aggregate of the replicates.
#[derive(Clone, Debug, PartialEq)]
pub struct PointAggregate {
    pub mean_u_hat: f64,
    pub stderr_u_hat: f64,
    pub mean_sigma_hat: f64,
    pub mean_v_hat: Option<f64>,
    pub mean_sigma_v: Option<f64>,
    pub mean_abs_bias: f64,
    pub mean_giant_fraction: f64,
}

pub fn aggregate(outputs: &[&RunOutput]) -> PointAggregate {
    let col = |f: &dyn Fn(&RunOutput) -> f64| outputs.iter().map(|o| f(o)).collect::<Vec<f64>>();
    let mean = |xs: Vec<f64>| mean_stderr(&xs).0;
    let (mean_u_hat, stderr_u_hat) = mean_stderr(&col(&|o| o.summary.u_hat));
    let has_v = outputs.iter().all(|o| o.summary.v_hat_giant.is_some());
    PointAggregate {
        mean_u_hat,
        stderr_u_hat,
        mean_sigma_hat: mean(col(&|o| o.summary.sigma_hat)),
        mean_v_hat: has_v.then(|| mean(col(&|o| o.summary.v_hat_giant.unwrap_or(0.0)))),
        mean_sigma_v: has_v.then(|| mean(col(&|o| o.summary.sigma_hat_giant.unwrap_or(0.0)))),
        mean_abs_bias: mean(col(&|o| o.summary.abs_bias)),
        mean_giant_fraction: mean(col(&|o| o.giant_fraction)),
    }
}

fn regression_row(alpha: f64, r: &RegressionResult) -> String {
    format!("{alpha},{},{},{},{},{}", r.slope, r.intercept, r.r_squared_fit, opt(r.r_squared_fixed), r.points)
}

/// Distinct exponents in first-appearance order.
fn alphas(plan: &Plan) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for a in plan.points.iter().filter_map(|p| p.alpha) {
        if !out.contains(&a) {
            out.push(a);
        }
    }
    out
}

/// Fixed-slope (−1/2) fit of the mean `σ̂` against `n`, per exponent.
pub fn fluctuation_fits(plan: &Plan, outputs: &[RunOutput]) -> anyhow::Result<Vec<(f64, RegressionResult)>> {
    alphas(plan)
        .into_iter()
        .map(|a| {
            let pts: Vec<(f64, f64)> = plan
                .points
                .iter()
                .filter(|p| p.alpha == Some(a))
                .map(|p| (p.n as f64, aggregate(&of_point(outputs, p)).mean_sigma_hat))
                .collect();
            Ok((a, fluctuation_scaling(&pts)?))
        })
        .collect()
}

/// Log-log regression of the per-run `|û* − u*|` against `n`, per exponent,
/// with the reference slope `−α`.
pub fn bias_fits(plan: &Plan, outputs: &[RunOutput]) -> anyhow::Result<Vec<(f64, RegressionResult)>> {
    alphas(plan)
        .into_iter()
        .map(|a| {
            let pts: Vec<(f64, f64)> = outputs
                .iter()
                .filter(|o| o.summary.alpha == Some(a))
                .map(|o| (o.summary.n as f64, o.summary.abs_bias))
                .collect();
            Ok((a, loglog_regression(&pts, Some(-a))?))
        })
        .collect()
}

fn of_point<'a>(outputs: &'a [RunOutput], p: &Point) -> Vec<&'a RunOutput> {
    outputs.iter().filter(|o| o.entry.point == p.tag).collect()
}

/// Aggregated CSVs over the scenario grid.
pub fn sweep(cfg: &ExperimentConfig, opts: &Options) -> anyhow::Result<Vec<PathBuf>> {
    let plan = prepare(cfg, opts)?;
    let outputs = simulate_plan(&plan, opts.seed, opts.threads, false)?;
    let mut files = Vec::new();
    write_common(opts, &outputs, &mut files)?;

    let rows: Vec<String> = plan
        .points
        .iter()
        .map(|p| {
            let a = aggregate(&of_point(&outputs, p));
            let whisker = |m: Option<f64>, s: Option<f64>, sign: f64| m.zip(s).map(|(m, s)| m + sign * 2.0 * s);
            format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                p.tag,
                p.n,
                opt(p.alpha),
                p.w_i(),
                p.w_e(),
                p.u_star,
                plan.runs,
                a.mean_u_hat,
                a.stderr_u_hat,
                a.mean_sigma_hat,
                a.mean_u_hat - 2.0 * a.mean_sigma_hat,
                a.mean_u_hat + 2.0 * a.mean_sigma_hat,
                opt(a.mean_v_hat),
                opt(a.mean_sigma_v),
                opt(whisker(a.mean_v_hat, a.mean_sigma_v, -1.0)),
                opt(whisker(a.mean_v_hat, a.mean_sigma_v, 1.0)),
                a.mean_abs_bias,
                a.mean_giant_fraction
            )
        })
        .collect();
    let p = opts.out.join("points.csv");
    write_rows(&p, POINTS_HEADER, &rows)?;
    files.push(p);

    let fits = match plan.scenario {
        Scenario::FigTplStd => Some(("fluctuation.csv", FLUCTUATION_HEADER, fluctuation_fits(&plan, &outputs)?)),
        Scenario::FigAlphaSlopes => Some(("alpha_slopes.csv", ALPHA_SLOPES_HEADER, bias_fits(&plan, &outputs)?)),
        _ => None,
    };
    if let Some((name, header, fits)) = fits {
        let rows: Vec<String> = fits.iter().map(|(a, r)| regression_row(*a, r)).collect();
        let p = opts.out.join(name);
        write_rows(&p, header, &rows)?;
        files.push(p);
    }
    let entries: Vec<RunEntry> = outputs.into_iter().map(|o| o.entry).collect();
    files.push(write_manifest(cfg, opts, "sweep", &files, entries)?);
    Ok(files)
}

#[derive(Serialize)]
struct MeanFieldEntry {
    method: &'static str,
    kernel: String,
    dt: f64,
    t_max: f64,
    nodes: usize,
    r0: Option<f64>,
    u_star: Option<f64>,
    final_aggregate: f64,
}

/// Deterministic limit of the configured model; writes `solution.csv`.
pub fn meanfield(cfg: &ExperimentConfig, opts: &Options) -> anyhow::Result<Vec<PathBuf>> {
    let plan = prepare(cfg, opts)?;
    let mf = &cfg.meanfield;
    let t_max = mf.t_max.unwrap_or(plan.t_max);
    let dt = mf.dt.unwrap_or(1e-3);
    let record = mf.record_step.unwrap_or(plan.record_step);
    ensure!(record >= dt, "meanfield record_step must be at least dt");
    let stride = ((record / dt).round() as usize).max(1);
    let stepping = Stepping::new(t_max, dt).with_stride(stride);
    let point = &plan.points[0];
    let gamma = plan.gamma;
    let u0 = plan.u0;
    let path = opts.out.join("solution.csv");
    let mut w = create(&path)?;

    let entry = match &point.recipe {
        Recipe::Custom(model) => {
            let m = cfg.model.as_ref().expect("custom scenario has a model");
            let transmission = custom_transmission(model, &point.kernels, point.n);
            match (m.kernel, transmission.as_constant(), point.kernels.gamma.as_constant()) {
                (KernelKind::Constant, Some(wc), Some(g)) => homogeneous_csv(&mut w, wc, g, u0, stepping)?,
                (KernelKind::Sbm, _, _) => {
                    let we = m.w_e_matrix.clone().unwrap_or_default();
                    // Fold the scaling into the infection matrix.
                    let factor = match m.scaling {
                        ScalingKind::Fixed => point.n as f64,
                        ScalingKind::Dense => 1.0,
                        ScalingKind::Family => cfg.target_w(),
                    };
                    let wi: Vec<Vec<f64>> = m
                        .w_i_matrix
                        .clone()
                        .unwrap_or_default()
                        .into_iter()
                        .map(|r| r.into_iter().map(|v| v * factor).collect())
                        .collect();
                    let k = we.len();
                    let g = m.gamma_vec.clone().unwrap_or_else(|| vec![m.gamma.unwrap_or(gamma); k]);
                    let mu = m.class_weights.clone().unwrap_or_else(|| vec![1.0 / k as f64; k]);
                    let sol = solve_sbm(&we, &wi, &g, &mu, &vec![u0; k], stepping)?;
                    sol.write_csv(&mut w)?;
                    MeanFieldEntry {
                        method: sol.method,
                        kernel: "sbm".into(),
                        dt,
                        t_max,
                        nodes: k,
                        r0: None,
                        u_star: None,
                        final_aggregate: sol.aggregate(sol.times.len() - 1),
                    }
                }
                _ => {
                    let nodes = mf.nodes.unwrap_or(64);
                    let quad = Quadrature::for_measure(&model.space, &model.measure, nodes)?;
                    general_csv(&mut w, &transmission, &point.kernels, &quad, u0, stepping)?
                }
            }
        }
        _ => homogeneous_csv(&mut w, cfg.target_w(), gamma, u0, stepping)?,
    };
    w.flush()?;
    let files = vec![path];
    let manifest = write_manifest(cfg, opts, "meanfield", &files, vec![entry])?;
    Ok(vec![files[0].clone(), manifest])
}

fn homogeneous_csv(out: &mut impl Write, w: f64, gamma: f64, u0: f64, st: Stepping) -> anyhow::Result<MeanFieldEntry> {
    let steps = (st.t_max / st.dt).ceil() as usize;
    let mut times: Vec<f64> = (0..=steps).step_by(st.stride).map(|k| (k as f64 * st.dt).min(st.t_max)).collect();
    if times.last() != Some(&st.t_max) {
        times.push(st.t_max);
    }
    let values = solve_homogeneous(w, gamma, u0, &times);
    writeln!(out, "# nodes: class0")?;
    writeln!(out, "# weights: 1")?;
    writeln!(out, "t,u_0")?;
    for (t, u) in times.iter().zip(&values) {
        writeln!(out, "{t},{u}")?;
    }
    let eq = equilibrium(w, gamma).ok();
    Ok(MeanFieldEntry {
        method: "closed-form",
        kernel: "constant".into(),
        dt: st.dt,
        t_max: st.t_max,
        nodes: 1,
        r0: eq.map(|e| e.0).filter(|r| r.is_finite()),
        u_star: eq.map(|e| e.1),
        final_aggregate: *values.last().unwrap_or(&u0),
    })
}

fn general_csv(
    out: &mut impl Write,
    w: &PairFn,
    kernels: &KernelSpec,
    quad: &Quadrature,
    u0: f64,
    st: Stepping,
) -> anyhow::Result<MeanFieldEntry> {
    let sol = solve_general_with(w, &kernels.gamma, quad, &PointFn::Constant(u0), st)?;
    sol.write_csv(&mut *out)?;
    Ok(MeanFieldEntry {
        method: sol.method,
        kernel: kernels.tag.as_str().into(),
        dt: st.dt,
        t_max: st.t_max,
        nodes: quad.len(),
        r0: None,
        u_star: None,
        final_aggregate: sol.aggregate(sol.times.len() - 1),
    })
}

#[derive(Serialize)]
struct CoupledEntry {
    point: String,
    n: usize,
    run_index: usize,
    seed: u64,
    t_max: f64,
    event_count: u64,
    sup_disagreement: f64,
    domination_violations: u64,
    gating_violations: u64,
}

/// Result of the shared-randomness oracle check.
#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub n: usize,
    pub seeds: usize,
    pub kernel: String,
    pub identical_logs: bool,
    pub mismatched_seeds: Vec<usize>,
}

/// Replays `seeds` arrow tables at `n = 8` through both coupled simulators.
pub fn oracle_check(kernels: &KernelSpec, seeds: usize, master: u64, t_max: f64) -> anyhow::Result<OracleReport> {
    let n = 8;
    let mut mismatched = Vec::new();
    for s in 0..seeds {
        let seed = sisnet_core::rng::derive_seed(master, &[label("oracle"), s as u64]);
        let pop = sisnet_core::Population::homogeneous(n);
        let graph = sisnet_core::sample_graph(pop.clone(), &kernels.w_e, sub_seed(seed, "graph"))?;
        let state = init_state(&pop, &PointFn::Constant(0.5), sub_seed(seed, "init"))?;
        let config = CoupledConfig::new(t_max, RecordGrid::Step(t_max / 8.0), sub_seed(seed, "coupled")).keep_events(true);
        let table = ArrowTable::sample(&graph, kernels, t_max, config.seed)?;
        let fast = replay_coupled(&graph, kernels, &state, &table, &config)?;
        let slow = brute_force_on_table(&graph, kernels, &state, &table, &config)?;
        if fast.events != slow.events || fast.eta_final != slow.eta_final || fast.tilde_final != slow.tilde_final {
            mismatched.push(s);
        }
    }
    Ok(OracleReport { n, seeds, kernel: format!("{:?}", kernels.tag), identical_logs: mismatched.is_empty(), mismatched_seeds: mismatched })
}

/// Oracle kernels: the configured model at `n = 8` when admissible.
fn oracle_kernels(point: &Point, gamma: f64) -> (KernelSpec, bool) {
    match point.recipe.kernels_at(8, gamma) {
        Ok(k) if point.recipe.is_homogeneous() => (k, false),
        _ => (KernelSpec::constant(0.35, 0.9, gamma).expect("valid constants"), true),
    }
}

/// Coupled replicates, their CSVs and the bound reports.
pub fn couple(cfg: &ExperimentConfig, opts: &Options) -> anyhow::Result<Vec<PathBuf>> {
    let mut cfg = cfg.clone();
    if let Some(ns) = &cfg.couple.n_list {
        cfg.n_list = Some(ns.clone());
    }
    let cfg = &cfg;
    let plan = Plan::from_config(cfg)?;
    for p in &plan.points {
        if p.n > COUPLE_MAX_N {
            bail!(cfg.error("n_list", format!("couple is limited to n <= {COUPLE_MAX_N}, got {}", p.n)));
        }
    }
    fs::create_dir_all(&opts.out)?;
    let t_max = cfg.couple.t_max.unwrap_or(plan.t_max);
    ensure!(t_max >= 0.0 && t_max.is_finite(), "couple horizon must be finite and non-negative");
    let record = cfg.couple.record_step.unwrap_or(1.0).min(t_max.max(f64::MIN_POSITIVE));
    let runs = cfg.couple.runs.unwrap_or(20);

    let tasks: Vec<(usize, usize)> = (0..plan.points.len()).flat_map(|p| (0..runs).map(move |r| (p, r))).collect();
    let records = with_pool(opts.threads, || {
        tasks
            .par_iter()
            .map(|&(pi, r)| {
                let point = &plan.points[pi];
                let seed = run_seed(opts.seed, &plan, point, r);
                let (pop, graph) = realize(point, seed)?;
                let state = init_state(&pop, &PointFn::Constant(plan.u0), sub_seed(seed, "init"))?;
                let config = CoupledConfig::new(t_max, RecordGrid::Step(record), sub_seed(seed, "coupled"));
                let rec = run_coupled(&graph, &point.kernels, &state, &config)?;
                Ok((seed, pop, rec))
            })
            .collect::<anyhow::Result<Vec<_>>>()
    })??;

    let dir = opts.out.join("coupled");
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let mut entries = Vec::new();
    let mut summary = Vec::new();
    let mut reports: Vec<(String, BoundReport)> = Vec::new();
    for (pi, point) in plan.points.iter().enumerate() {
        let chunk = &records[pi * runs..(pi + 1) * runs];
        for (r, (seed, _, rec)) in chunk.iter().enumerate() {
            let p = dir.join(format!("coupled_{}_run{r}.csv", point.tag));
            let mut w = create(&p)?;
            write_coupled(rec, &mut w)?;
            w.flush()?;
            files.push(p);
            summary.push(format!(
                "{},{},{r},{},{},{},{},{},{}",
                point.tag,
                point.n,
                rec.sup_disagreement,
                rec.final_fog,
                rec.final_roots,
                rec.domination_violations,
                rec.gating_violations,
                rec.event_count
            ));
            entries.push(CoupledEntry {
                point: point.tag.clone(),
                n: point.n,
                run_index: r,
                seed: *seed,
                t_max,
                event_count: rec.event_count,
                sup_disagreement: rec.sup_disagreement,
                domination_violations: rec.domination_violations,
                gating_violations: rec.gating_violations,
            });
        }
        // I_n is evaluated on the features of the first replicate.
        let recs: Vec<_> = chunk.iter().map(|(_, _, rec)| rec.clone()).collect();
        let report = coupling_bound_report(&recs, &point.kernels, &chunk[0].1.features)?;
        let p = opts.out.join(format!("bound_{}.json", point.tag));
        fs::write(&p, serde_json::to_string_pretty(&report)?)?;
        files.push(p);
        reports.push((point.tag.clone(), report));
    }
    let p = opts.out.join("coupled_summary.csv");
    write_rows(&p, COUPLED_SUMMARY_HEADER, &summary)?;
    files.push(p);

    if opts.oracle {
        let (kernels, fallback) = oracle_kernels(&plan.points[0], plan.gamma);
        let seeds = cfg.couple.oracle_seeds.unwrap_or(100);
        let mut report = oracle_check(&kernels, seeds, opts.seed, 2.0)?;
        if fallback {
            report.kernel.push_str(" (fallback constant kernel; configured model is not admissible at n = 8)");
        }
        let p = opts.out.join("oracle.json");
        fs::write(&p, serde_json::to_string_pretty(&report)?)?;
        files.push(p);
        ensure!(report.identical_logs, "oracle mismatch on seeds {:?}", report.mismatched_seeds);
    }
    files.push(write_manifest(cfg, opts, "couple", &files, entries)?);
    Ok(files)
}
