// SPDX-License-Identifier: Apache-2.0

//! Replicate execution on a thread pool with scheduling-independent output.

use rayon::prelude::*;
use serde::Serialize;
use sisnet_core::io::{write_trajectory, ComponentsRow, SummaryRow};
use sisnet_core::rng::{derive_seed, label};
use sisnet_core::{
    init_state, run, sample_features, sample_graph, temporal_summary, PointFn, Population, RecordGrid, SampledGraph,
    SimConfig,
};

use crate::scenario::{Plan, Point};

/// Seed of replicate `run_index` at `point`.
pub fn run_seed(master: u64, plan: &Plan, point: &Point, run_index: usize) -> u64 {
    derive_seed(master, &[label(plan.scenario.name()), point.n as u64, point.key, run_index as u64])
}

pub fn sub_seed(seed: u64, name: &str) -> u64 {
    derive_seed(seed, &[label(name)])
}

/// Per-run manifest entry.
#[derive(Clone, Debug, Serialize)]
pub struct RunEntry {
    pub point: String,
    pub n: usize,
    pub alpha: Option<f64>,
    pub w_i: f64,
    pub w_e: f64,
    pub kernel: &'static str,
    pub run_index: usize,
    pub seed: u64,
    pub t_max: f64,
    pub event_count: u64,
    pub absorbed_at: Option<f64>,
    pub audits: u64,
    pub max_rate_deviation: f64,
    pub wall_time: f64,
}

pub struct RunOutput {
    pub summary: SummaryRow,
    pub components: ComponentsRow,
    pub giant_fraction: f64,
    pub trajectory_csv: Option<String>,
    pub entry: RunEntry,
}

/// Features and graph of one replicate.
pub fn realize(point: &Point, seed: u64) -> sisnet_core::Result<(Population, SampledGraph)> {
    let pop = if point.recipe.is_homogeneous() {
        Population::homogeneous(point.n)
    } else {
        let (space, measure) = point.recipe.space();
        sample_features(&space, &measure, point.n, sub_seed(seed, "features"))?
    };
    let graph = sample_graph(pop.clone(), &point.kernels.w_e, sub_seed(seed, "graph"))?;
    Ok((pop, graph))
}

pub fn simulate_one(plan: &Plan, point: &Point, run_index: usize, master: u64, keep_trajectory: bool) -> anyhow::Result<RunOutput> {
    let seed = run_seed(master, plan, point, run_index);
    let (pop, graph) = realize(point, seed)?;
    let state = init_state(&pop, &PointFn::Constant(plan.u0), sub_seed(seed, "init"))?;
    let (a, b) = plan.window;
    let mut config = SimConfig::new(plan.t_max, RecordGrid::Step(plan.record_step), sub_seed(seed, "sis")).with_window(a, b);
    if plan.giant {
        config = config.with_mask(graph.giant_mask());
    }
    let traj = run(&graph, &point.kernels, &state, &config)?;
    let s = temporal_summary(&traj, plan.window)?;
    let trajectory_csv = if keep_trajectory {
        let mut buf = Vec::new();
        write_trajectory(&traj, &mut buf)?;
        Some(String::from_utf8(buf)?)
    } else {
        None
    };
    Ok(RunOutput {
        summary: SummaryRow {
            n: point.n,
            alpha: point.alpha,
            w_i: point.w_i(),
            run_index,
            u_hat: s.u_hat,
            sigma_hat: s.sigma_hat,
            v_hat_giant: s.v_hat,
            sigma_hat_giant: s.sigma_v,
            abs_bias: (s.u_hat - point.u_star).abs(),
        },
        components: ComponentsRow::of(&graph),
        giant_fraction: graph.giant_fraction(),
        trajectory_csv,
        entry: RunEntry {
            point: point.tag.clone(),
            n: point.n,
            alpha: point.alpha,
            w_i: point.w_i(),
            w_e: point.w_e(),
            kernel: point.kernels.tag.as_str(),
            run_index,
            seed,
            t_max: plan.t_max,
            event_count: traj.event_count,
            absorbed_at: traj.absorbed_at,
            audits: traj.audits,
            max_rate_deviation: traj.max_rate_deviation,
            wall_time: traj.wall_time,
        },
    })
}

/// Runs `f` inside a pool of `threads` workers (all cores when `None`).
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        anyhow::ensure!(k >= 1, "--threads must be at least 1");
        builder = builder.num_threads(k);
    }
    Ok(builder.build()?.install(f))
}

/// All replicates of all points, in (point, run) order.
pub fn simulate_plan(plan: &Plan, master: u64, threads: Option<usize>, keep_trajectories: bool) -> anyhow::Result<Vec<RunOutput>> {
    let tasks: Vec<(usize, usize)> =
        (0..plan.points.len()).flat_map(|p| (0..plan.runs).map(move |r| (p, r))).collect();
    with_pool(threads, || {
        tasks
            .par_iter()
            .map(|&(p, r)| simulate_one(plan, &plan.points[p], r, master, keep_trajectories))
            .collect::<anyhow::Result<Vec<_>>>()
    })?
}
