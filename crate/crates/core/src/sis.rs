// SPDX-License-Identifier: Apache-2.0

//! Exact event-driven SIS dynamics on a fixed graph (direct Gillespie method).

use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::feature::{Feature, Population};
use crate::graph::SampledGraph;
use crate::kernel::{KernelSpec, PairFn, PointFn};
use crate::rng;
use crate::stats::StepIntegrator;
use crate::sumtree::{BlockSums, Fenwick, WeightIndex};

/// Default number of events between two exact rate recomputations.
pub const AUDIT_INTERVAL: u64 = 10_000;

/// Health flags of every vertex plus the infection pressure they induce.
#[derive(Clone, Debug, PartialEq)]
pub struct EpidemicState {
    /// `true` for infected.
    pub states: Vec<bool>,
    pub infected_count: usize,
    /// `λ_i = Σ_{j ∼ i infected} w_I(x_i, x_j)`; empty until
    /// [`EpidemicState::refresh_rates`] is called.
    pub pressure: Vec<f64>,
    pub total_recovery_rate: f64,
    pub total_infection_rate: f64,
}

impl EpidemicState {
    pub fn from_flags(states: Vec<bool>) -> Self {
        let infected_count = states.iter().filter(|s| **s).count();
        Self { states, infected_count, pressure: Vec::new(), total_recovery_rate: 0.0, total_infection_rate: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    /// Recomputes pressures and aggregate rates from scratch.
    pub fn refresh_rates(&mut self, graph: &SampledGraph, kernels: &KernelSpec) -> Result<()> {
        if graph.n() != self.n() {
            return Err(invalid(format!("state has {} vertices, graph has {}", self.n(), graph.n())));
        }
        let table = RateTable::new(graph, kernels);
        self.pressure = table.pressures(graph, &self.states);
        self.total_recovery_rate =
            self.states.iter().zip(&table.gamma).filter(|(s, _)| **s).map(|(_, g)| g).sum();
        self.total_infection_rate =
            self.states.iter().zip(&self.pressure).filter(|(s, _)| !**s).map(|(_, l)| l).sum();
        Ok(())
    }
}

/// Infects each vertex independently with probability `u0(x_i)`.
///
/// Vertices with probability exactly 0 or 1 consume no randomness.
pub fn init_state(pop: &Population, u0: &PointFn, seed: u64) -> Result<EpidemicState> {
    let mut rng = rng::stream(seed);
    let mut states = Vec::with_capacity(pop.n());
    for x in &pop.features {
        let p = u0.eval(x);
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("initial infection probability {p} at {x:?} is outside [0, 1]")));
        }
        states.push(if p == 1.0 {
            true
        } else if p == 0.0 {
            false
        } else {
            rng.random::<f64>() < p
        });
    }
    Ok(EpidemicState::from_flags(states))
}

/// Times at which `u` and `v` are recorded.
#[derive(Clone, Debug, PartialEq)]
pub enum RecordGrid {
    /// `0, h, 2h, …` up to `t_max`, with `t_max` always included.
    Step(f64),
    Times(Vec<f64>),
}

impl RecordGrid {
    pub fn times(&self, t_max: f64) -> Result<Vec<f64>> {
        match self {
            RecordGrid::Step(h) => {
                if !(*h > 0.0 && h.is_finite()) {
                    return Err(invalid(format!("record step must be positive, got {h}")));
                }
                let k = (t_max / h + 1e-9).floor() as usize;
                let mut ts: Vec<f64> = (0..=k).map(|i| (i as f64 * h).min(t_max)).collect();
                if *ts.last().unwrap() < t_max {
                    ts.push(t_max);
                }
                ts.dedup();
                Ok(ts)
            }
            RecordGrid::Times(ts) => {
                if ts.iter().any(|t| !(*t >= 0.0 && *t <= t_max)) {
                    return Err(invalid(format!("record times must lie in [0, {t_max}]")));
                }
                let mut ts = ts.clone();
                ts.sort_by(f64::total_cmp);
                ts.dedup();
                Ok(ts)
            }
        }
    }
}

/// Run parameters.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub t_max: f64,
    pub record: RecordGrid,
    /// Vertex subset for `v` (typically the giant component).
    pub mask: Option<Vec<bool>>,
    /// Windows over which exact temporal integrals are accumulated online.
    pub windows: Vec<(f64, f64)>,
    /// Retain the full event log.
    pub keep_events: bool,
    pub audit_interval: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(t_max: f64, record: RecordGrid, seed: u64) -> Self {
        Self { t_max, record, mask: None, windows: Vec::new(), keep_events: false, audit_interval: AUDIT_INTERVAL, seed }
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Self {
        self.mask = Some(mask);
        self
    }

    pub fn with_window(mut self, a: f64, b: f64) -> Self {
        self.windows.push((a, b));
        self
    }

    pub fn keep_events(mut self, keep: bool) -> Self {
        self.keep_events = keep;
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(invalid(format!("t_max must be positive and finite, got {}", self.t_max)));
        }
        if let Some(m) = &self.mask {
            if m.len() != n {
                return Err(invalid(format!("mask has {} entries for {n} vertices", m.len())));
            }
            if !m.iter().any(|b| *b) {
                return Err(invalid("mask selects no vertex"));
            }
        }
        for &(a, b) in &self.windows {
            if !(0.0 <= a && a < b && b <= self.t_max) {
                return Err(invalid(format!("window [{a}, {b}] is not inside [0, {}]", self.t_max)));
            }
        }
        if self.audit_interval == 0 {
            return Err(invalid("audit interval must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Infection,
    Recovery,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SisEvent {
    pub t: f64,
    pub vertex: u32,
    pub kind: EventKind,
}

/// Exact integrals of `u` (and `v`) over one window.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowIntegrals {
    pub u: StepIntegrator,
    pub v: Option<StepIntegrator>,
}

/// Output of one run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub n: usize,
    pub t_max: f64,
    pub grid: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Option<Vec<f64>>,
    pub initial: Vec<bool>,
    pub mask: Option<Vec<bool>>,
    pub events: Option<Vec<SisEvent>>,
    pub windows: Vec<WindowIntegrals>,
    pub final_state: Vec<bool>,
    pub event_count: u64,
    /// Time at which the all-susceptible state was reached, if it was.
    pub absorbed_at: Option<f64>,
    pub audits: u64,
    /// Largest relative deviation between maintained and recomputed rates.
    pub max_rate_deviation: f64,
    pub wall_time: f64,
}

impl Trajectory {
    fn mask_size(&self) -> Option<usize> {
        self.mask.as_ref().map(|m| m.iter().filter(|b| **b).count())
    }

    /// Replays the event log and integrates `u` and `v` over `[a, b]`.
    pub(crate) fn integrate_events(&self, a: f64, b: f64) -> (StepIntegrator, Option<StepIntegrator>) {
        let events = self.events.as_deref().unwrap_or(&[]);
        let n = self.n as f64;
        let mut state = self.initial.clone();
        let mut count = state.iter().filter(|s| **s).count();
        let mask_size = self.mask_size();
        let mut mcount = self.mask.as_ref().map_or(0, |m| m.iter().zip(&state).filter(|(m, s)| **m && **s).count());
        let mut iu = StepIntegrator::new(a, b);
        let mut iv = self.mask.as_ref().map(|_| StepIntegrator::new(a, b));
        let mut t = 0.0;
        for ev in events {
            iu.add(t, ev.t, count as f64 / n);
            if let (Some(iv), Some(ms)) = (iv.as_mut(), mask_size) {
                iv.add(t, ev.t, mcount as f64 / ms as f64);
            }
            let v = ev.vertex as usize;
            let infected = ev.kind == EventKind::Infection;
            state[v] = infected;
            let step = if infected { 1isize } else { -1 };
            count = count.wrapping_add_signed(step);
            if self.mask.as_ref().is_some_and(|m| m[v]) {
                mcount = mcount.wrapping_add_signed(step);
            }
            t = ev.t;
        }
        iu.add(t, self.t_max, count as f64 / n);
        if let (Some(iv), Some(ms)) = (iv.as_mut(), mask_size) {
            iv.add(t, self.t_max, mcount as f64 / ms as f64);
        }
        (iu, iv)
    }

    /// Infected count at time `t` within `mask` (all vertices if `None`),
    /// replayed from the event log.
    fn count_at(&self, t: f64, mask: Option<&[bool]>) -> usize {
        let mut state = self.initial.clone();
        for ev in self.events.as_deref().unwrap_or(&[]) {
            if ev.t > t {
                break;
            }
            state[ev.vertex as usize] = ev.kind == EventKind::Infection;
        }
        match mask {
            Some(m) => state.iter().zip(m).filter(|(s, m)| **s && **m).count(),
            None => state.iter().filter(|s| **s).count(),
        }
    }
}

/// Infected fraction at time `t` (right-continuous), relative to the mask
/// cardinality when a mask is given.
///
/// Arbitrary times and masks need the event log; without it `t` must be a
/// recording time and the mask must be the one used by the run.
pub fn infected_fraction(traj: &Trajectory, t: f64, mask: Option<&[bool]>) -> Result<f64> {
    if !(0.0..=traj.t_max).contains(&t) {
        return Err(invalid(format!("time {t} is outside [0, {}]", traj.t_max)));
    }
    let denom = match mask {
        Some(m) => {
            if m.len() != traj.n {
                return Err(invalid(format!("mask has {} entries for {} vertices", m.len(), traj.n)));
            }
            let k = m.iter().filter(|b| **b).count();
            if k == 0 {
                return Err(invalid("mask selects no vertex"));
            }
            k
        }
        None => traj.n,
    };
    if traj.events.is_some() {
        return Ok(traj.count_at(t, mask) as f64 / denom as f64);
    }
    let k = traj
        .grid
        .iter()
        .position(|g| *g == t)
        .ok_or_else(|| invalid(format!("time {t} is not a recording time and no event log was kept")))?;
    match mask {
        None => Ok(traj.u[k]),
        Some(m) if traj.mask.as_deref() == Some(m) => Ok(traj.v.as_ref().expect("masked run records v")[k]),
        Some(_) => Err(invalid("mask differs from the run's mask and no event log was kept")),
    }
}

/// Per-edge infection rates and per-vertex recovery rates of one graph.
#[derive(Clone, Debug)]
pub struct RateTable {
    /// `w_I(x_i, x_j)` stored at the slot of `i` in the row of `j`, so that a
    /// change at `j` visits its own row. `None` when `w_I` is constant.
    out: Option<Vec<f64>>,
    constant: f64,
    pub gamma: Vec<f64>,
}

impl RateTable {
    pub fn new(graph: &SampledGraph, kernels: &KernelSpec) -> Self {
        Self::from_parts(graph, &kernels.w_i, &kernels.gamma)
    }

    pub fn from_parts(graph: &SampledGraph, w_i: &PairFn, gamma: &PointFn) -> Self {
        let xs = graph.features();
        let gamma = xs.iter().map(|x| gamma.eval(x)).collect();
        if let Some(c) = w_i.as_constant() {
            return Self { out: None, constant: c, gamma };
        }
        let mut out = Vec::with_capacity(graph.adjacency().len());
        for j in 0..graph.n() {
            for &i in graph.neighbors(j) {
                out.push(w_i.eval(&xs[i as usize], &xs[j]));
            }
        }
        Self { out: Some(out), constant: 0.0, gamma }
    }

    #[inline]
    fn slot(&self, s: usize) -> f64 {
        match &self.out {
            Some(o) => o[s],
            None => self.constant,
        }
    }

    fn pressures(&self, graph: &SampledGraph, states: &[bool]) -> Vec<f64> {
        let mut lam = vec![0.0; graph.n()];
        let off = graph.offsets();
        let adj = graph.adjacency();
        for j in 0..graph.n() {
            if states[j] {
                for s in off[j]..off[j + 1] {
                    lam[adj[s] as usize] += self.slot(s);
                }
            }
        }
        lam
    }
}

/// Simulates the epidemic from `state` until `config.t_max`.
pub fn run(graph: &SampledGraph, kernels: &KernelSpec, state: &EpidemicState, config: &SimConfig) -> Result<Trajectory> {
    let table = RateTable::new(graph, kernels);
    run_with_table(graph, &table, state, config)
}

/// As [`run`], reusing a precomputed rate table (many runs on one graph).
pub fn run_with_table(graph: &SampledGraph, table: &RateTable, state: &EpidemicState, config: &SimConfig) -> Result<Trajectory> {
    let n = graph.n();
    if state.n() != n {
        return Err(invalid(format!("state has {} vertices, graph has {n}", state.n())));
    }
    config.validate(n)?;
    // Per event, Fenwick costs about (deg + 1) log n and block sums about
    // 2 (deg + 1) + 2 √n.
    let d = graph.adjacency().len() as f64 / n.max(1) as f64;
    let ln = (n.max(2) as f64).log2();
    if (d + 1.0) * ln <= 2.0 * (d + 1.0) + 2.0 * (n as f64).sqrt() {
        Engine::<Fenwick>::new(graph, table, state, config).run()
    } else {
        Engine::<BlockSums>::new(graph, table, state, config).run()
    }
}

struct Engine<'a, W: WeightIndex> {
    graph: &'a SampledGraph,
    table: &'a RateTable,
    config: &'a SimConfig,
    state: Vec<bool>,
    pressure: Vec<f64>,
    infected_neighbors: Vec<u32>,
    infection: W,
    recovery: Fenwick,
    count: usize,
    mcount: usize,
    mask_size: usize,
}

impl<'a, W: WeightIndex> Engine<'a, W> {
    fn new(graph: &'a SampledGraph, table: &'a RateTable, init: &EpidemicState, config: &'a SimConfig) -> Self {
        let state = init.states.clone();
        let pressure = table.pressures(graph, &state);
        let infected_neighbors = count_infected_neighbors(graph, &state);
        let infection = W::from_leaves(state.iter().zip(&pressure).map(|(s, l)| if *s { 0.0 } else { *l }).collect());
        let recovery = Fenwick::new(state.iter().zip(&table.gamma).map(|(s, g)| if *s { *g } else { 0.0 }).collect());
        let count = state.iter().filter(|s| **s).count();
        let (mcount, mask_size) = match &config.mask {
            Some(m) => (
                m.iter().zip(&state).filter(|(m, s)| **m && **s).count(),
                m.iter().filter(|b| **b).count(),
            ),
            None => (0, 0),
        };
        Self { graph, table, config, state, pressure, infected_neighbors, infection, recovery, count, mcount, mask_size }
    }

    fn u(&self) -> f64 {
        self.count as f64 / self.state.len() as f64
    }

    fn v(&self) -> f64 {
        self.mcount as f64 / self.mask_size as f64
    }

    fn run(mut self) -> Result<Trajectory> {
        let started = Instant::now();
        let cfg = self.config;
        let masked = cfg.mask.is_some();
        let grid = cfg.record.times(cfg.t_max)?;
        let mut us = Vec::with_capacity(grid.len());
        let mut vs = if masked { Some(Vec::with_capacity(grid.len())) } else { None };
        let mut windows: Vec<WindowIntegrals> = cfg
            .windows
            .iter()
            .map(|&(a, b)| WindowIntegrals { u: StepIntegrator::new(a, b), v: masked.then(|| StepIntegrator::new(a, b)) })
            .collect();
        let mut events = cfg.keep_events.then(Vec::new);
        let mut rng = rng::stream(cfg.seed);
        let initial = self.state.clone();

        let mut t = 0.0;
        let mut next_grid = 0;
        let mut event_count = 0u64;
        let mut absorbed_at = None;
        let mut audits = 0;
        let mut max_dev = 0.0f64;

        loop {
            let rr = self.recovery.total();
            let ri = self.infection.total();
            let total = rr + ri;
            if !total.is_finite() {
                return Err(Error::NonFiniteRate { t, rate: total, events: event_count });
            }
            let t_next = if self.count == 0 || total <= 0.0 { f64::INFINITY } else { t + rng::exp_time(&mut rng, total) };
            let t_stop = t_next.min(cfg.t_max);
            while next_grid < grid.len() && grid[next_grid] < t_next {
                us.push(self.u());
                if let Some(vs) = vs.as_mut() {
                    vs.push(self.v());
                }
                next_grid += 1;
            }
            let (u, v) = (self.u(), if masked { self.v() } else { 0.0 });
            for w in &mut windows {
                w.u.add(t, t_stop, u);
                if let Some(iv) = w.v.as_mut() {
                    iv.add(t, t_stop, v);
                }
            }
            if t_next > cfg.t_max {
                if self.count == 0 && absorbed_at.is_none() {
                    absorbed_at = Some(t);
                }
                break;
            }
            t = t_next;

            // Choose the event; a rounding miss redraws the uniform.
            let (vertex, kind) = loop {
                let r = rng.random::<f64>() * total;
                if r < rr {
                    let i = self.recovery.find(r);
                    if i < self.state.len() && self.state[i] && self.recovery.get(i) > 0.0 {
                        break (i, EventKind::Recovery);
                    }
                } else {
                    let i = self.infection.find(r - rr);
                    if i < self.state.len() && !self.state[i] && self.infection.get(i) > 0.0 {
                        break (i, EventKind::Infection);
                    }
                }
            };
            self.apply(vertex, kind);
            event_count += 1;
            if let Some(ev) = events.as_mut() {
                ev.push(SisEvent { t, vertex: vertex as u32, kind });
            }
            if event_count % cfg.audit_interval == 0 {
                max_dev = max_dev.max(self.audit());
                audits += 1;
            }
        }
        debug_assert_eq!(us.len(), grid.len());

        Ok(Trajectory {
            n: self.state.len(),
            t_max: cfg.t_max,
            grid,
            u: us,
            v: vs,
            initial,
            mask: cfg.mask.clone(),
            events,
            windows,
            final_state: self.state,
            event_count,
            absorbed_at,
            audits,
            max_rate_deviation: max_dev,
            wall_time: started.elapsed().as_secs_f64(),
        })
    }

    fn apply(&mut self, v: usize, kind: EventKind) {
        let infected = kind == EventKind::Infection;
        self.state[v] = infected;
        if infected {
            self.count += 1;
            self.infection.set(v, 0.0);
            self.recovery.set(v, self.table.gamma[v]);
        } else {
            self.count -= 1;
            self.recovery.set(v, 0.0);
            self.infection.set(v, self.pressure[v]);
        }
        if self.config.mask.as_ref().is_some_and(|m| m[v]) {
            if infected {
                self.mcount += 1;
            } else {
                self.mcount -= 1;
            }
        }
        let off = self.graph.offsets();
        let adj = self.graph.adjacency();
        for s in off[v]..off[v + 1] {
            let i = adj[s] as usize;
            let w = self.table.slot(s);
            if infected {
                self.pressure[i] += w;
                self.infected_neighbors[i] += 1;
            } else {
                self.infected_neighbors[i] -= 1;
                self.pressure[i] = if self.infected_neighbors[i] == 0 { 0.0 } else { self.pressure[i] - w };
            }
            if !self.state[i] {
                self.infection.set(i, self.pressure[i]);
            }
        }
    }

    /// Recomputes every rate from scratch, returns the largest relative
    /// deviation found, and replaces the maintained values.
    fn audit(&mut self) -> f64 {
        let exact = self.table.pressures(self.graph, &self.state);
        let mut dev = 0.0f64;
        for (a, b) in self.pressure.iter().zip(&exact) {
            if a != b {
                dev = dev.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
            }
        }
        let maintained = self.infection.total() + self.recovery.total();
        self.pressure = exact;
        for i in 0..self.state.len() {
            let leaf = if self.state[i] { 0.0 } else { self.pressure[i] };
            self.infection.set(i, leaf);
        }
        self.infection.rebuild();
        self.recovery.rebuild();
        let fresh = self.infection.total() + self.recovery.total();
        if fresh > 0.0 {
            dev = dev.max((maintained - fresh).abs() / fresh);
        }
        dev
    }
}

fn count_infected_neighbors(graph: &SampledGraph, state: &[bool]) -> Vec<u32> {
    let mut c = vec![0u32; graph.n()];
    for j in 0..graph.n() {
        if state[j] {
            for &i in graph.neighbors(j) {
                c[i as usize] += 1;
            }
        }
    }
    c
}

/// Vertex features grouped by class label, for conservation checks.
pub fn class_histogram(features: &[Feature], k: usize) -> Vec<usize> {
    let mut h = vec![0; k];
    for x in features {
        if let Some(c) = x.class() {
            if c < k {
                h[c] += 1;
            }
        }
    }
    h
}
