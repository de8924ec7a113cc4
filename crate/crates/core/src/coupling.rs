// SPDX-License-Identifier: Apache-2.0

//! Coupled pair of epidemics sharing their randomness: `η` on the sampled
//! graph and `η̃` whose connections are resampled at every arrow after the
//! first, together with the fog process bounding their disagreement.
//!
//! Arrows are counted per unordered pair. The fast simulator draws three
//! superposed streams by thinning: recoveries of vertices infected in either
//! copy, arrows along edges, and arrows along non-edges that are activated
//! for `η̃`. The last stream uses a per-pair delay `D ~ Exp(w_I(i,j) + w_I(j,i))`
//! standing for the first arrow on the pair, which never activates on a
//! non-edge; afterwards activated arrows form a Poisson stream of rate
//! `w_I w_E`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, model, Result};
use crate::feature::Feature;
use crate::graph::SampledGraph;
use crate::kernel::{compute_in, KernelSpec};
use crate::rng::{self, SimRng};
use crate::sis::{EpidemicState, RecordGrid};
use crate::stats::mean_stderr;

/// Largest population accepted by [`brute_force_coupled`].
pub const BRUTE_FORCE_MAX_N: usize = 64;

/// Pairs checked for adjacency consistency before a coupled run.
const CONSISTENCY_PAIRS: usize = 1000;

#[derive(Clone, Debug)]
pub struct CoupledConfig {
    /// Horizon `T ≥ 0`.
    pub t_max: f64,
    pub record: RecordGrid,
    pub keep_events: bool,
    pub seed: u64,
}

impl CoupledConfig {
    pub fn new(t_max: f64, record: RecordGrid, seed: u64) -> Self {
        Self { t_max, record, keep_events: false, seed }
    }

    pub fn keep_events(mut self, keep: bool) -> Self {
        self.keep_events = keep;
        self
    }

    fn grid(&self) -> Result<Vec<f64>> {
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(invalid(format!("horizon must be finite and non-negative, got {}", self.t_max)));
        }
        if self.t_max == 0.0 {
            return Ok(vec![0.0]);
        }
        self.record.times(self.t_max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CoupledEventKind {
    EtaInfect,
    TildeInfect,
    EtaRecover,
    TildeRecover,
    FogChild,
    Root,
}

/// One state change; `source` is the tail of the arrow for arrow events.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoupledEvent {
    pub t: f64,
    pub vertex: u32,
    pub source: Option<u32>,
    pub kind: CoupledEventKind,
}

/// Output of one coupled run.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledRecord {
    pub n: usize,
    pub t_max: f64,
    pub grid: Vec<f64>,
    /// `n⁻¹ #{i : E_i ≠ Ẽ_i}` at each grid time.
    pub disagreement: Vec<f64>,
    /// `Ξ_t / n` at each grid time.
    pub fog_fraction: Vec<f64>,
    pub roots: Vec<usize>,
    /// Supremum of the disagreement over `[0, T]` (over all event times).
    pub sup_disagreement: f64,
    pub final_fog: usize,
    pub final_roots: usize,
    /// Event times at which the disagreement exceeded the fog size.
    pub domination_violations: u64,
    /// Root creations on an edge whose arrow count was below two.
    pub gating_violations: u64,
    pub eta_final: Vec<bool>,
    pub tilde_final: Vec<bool>,
    pub events: Option<Vec<CoupledEvent>>,
    pub event_count: u64,
}

impl CoupledRecord {
    pub fn eta_infected(&self) -> usize {
        self.eta_final.iter().filter(|b| **b).count()
    }

    pub fn tilde_infected(&self) -> usize {
        self.tilde_final.iter().filter(|b| **b).count()
    }
}

/// State shared by the fast simulator and the table replay.
struct CoupledCore<'a> {
    features: &'a [Feature],
    kernels: &'a KernelSpec,
    eta: Vec<bool>,
    tilde: Vec<bool>,
    fog: Vec<bool>,
    /// Vertices infected in at least one copy, with positions.
    either: Vec<u32>,
    either_pos: Vec<u32>,
    disagree: usize,
    fog_count: usize,
    roots: usize,
    sup_d: usize,
    domination_violations: u64,
    gating_violations: u64,
    event_count: u64,
    events: Option<Vec<CoupledEvent>>,
    grid: Vec<f64>,
    next_grid: usize,
    rec_d: Vec<f64>,
    rec_fog: Vec<f64>,
    rec_roots: Vec<usize>,
}

const ABSENT: u32 = u32::MAX;

impl<'a> CoupledCore<'a> {
    fn new(features: &'a [Feature], kernels: &'a KernelSpec, init: &EpidemicState, grid: Vec<f64>, keep: bool) -> Self {
        let n = features.len();
        let mut core = Self {
            features,
            kernels,
            eta: init.states.clone(),
            tilde: init.states.clone(),
            fog: vec![false; n],
            either: Vec::new(),
            either_pos: vec![ABSENT; n],
            disagree: 0,
            fog_count: 0,
            roots: 0,
            sup_d: 0,
            domination_violations: 0,
            gating_violations: 0,
            event_count: 0,
            events: keep.then(Vec::new),
            rec_d: Vec::with_capacity(grid.len()),
            rec_fog: Vec::with_capacity(grid.len()),
            rec_roots: Vec::with_capacity(grid.len()),
            grid,
            next_grid: 0,
        };
        for i in 0..n {
            core.sync_either(i);
        }
        core
    }

    fn n(&self) -> usize {
        self.eta.len()
    }

    fn sync_either(&mut self, i: usize) {
        let inside = self.either_pos[i] != ABSENT;
        let should = self.eta[i] || self.tilde[i];
        if should && !inside {
            self.either_pos[i] = self.either.len() as u32;
            self.either.push(i as u32);
        } else if !should && inside {
            let p = self.either_pos[i] as usize;
            let last = *self.either.last().unwrap();
            self.either.swap_remove(p);
            if (last as usize) != i {
                self.either_pos[last as usize] = p as u32;
            }
            self.either_pos[i] = ABSENT;
        }
    }

    /// Records every grid time strictly before `t` with the current state.
    fn advance(&mut self, t: f64) {
        let n = self.n() as f64;
        while self.next_grid < self.grid.len() && self.grid[self.next_grid] < t {
            self.rec_d.push(self.disagree as f64 / n);
            self.rec_fog.push(self.fog_count as f64 / n);
            self.rec_roots.push(self.roots);
            self.next_grid += 1;
        }
    }

    fn log(&mut self, t: f64, vertex: usize, source: Option<usize>, kind: CoupledEventKind) {
        self.event_count += 1;
        if let Some(ev) = self.events.as_mut() {
            ev.push(CoupledEvent { t, vertex: vertex as u32, source: source.map(|s| s as u32), kind });
        }
    }

    fn set_copy(&mut self, i: usize, tilde: bool, value: bool) {
        let before = self.eta[i] != self.tilde[i];
        if tilde {
            self.tilde[i] = value;
        } else {
            self.eta[i] = value;
        }
        let after = self.eta[i] != self.tilde[i];
        match (before, after) {
            (false, true) => self.disagree += 1,
            (true, false) => self.disagree -= 1,
            _ => {}
        }
    }

    fn check(&mut self) {
        if self.disagree > self.fog_count {
            self.domination_violations += 1;
        }
        self.sup_d = self.sup_d.max(self.disagree);
    }

    /// Accepted recovery mark at `i`: each copy where `i` is infected recovers.
    fn recover(&mut self, t: f64, i: usize) {
        if self.eta[i] {
            self.set_copy(i, false, false);
            self.log(t, i, None, CoupledEventKind::EtaRecover);
        }
        if self.tilde[i] {
            self.set_copy(i, true, false);
            self.log(t, i, None, CoupledEventKind::TildeRecover);
        }
        self.sync_either(i);
        self.check();
    }

    /// Arrow from `j` to `i` activated for `η` when `c` and for `η̃` when
    /// `ct`. `count` is the arrow count of the pair for edge arrows.
    fn arrow(&mut self, t: f64, i: usize, j: usize, c: bool, ct: bool, count: Option<u32>) {
        let (eta_inf, tilde_inf) = (c && self.eta[j] && !self.eta[i], ct && self.tilde[j] && !self.tilde[i]);
        if eta_inf {
            self.set_copy(i, false, true);
            self.log(t, i, Some(j), CoupledEventKind::EtaInfect);
        }
        if tilde_inf {
            self.set_copy(i, true, true);
            self.log(t, i, Some(j), CoupledEventKind::TildeInfect);
        }
        if eta_inf || tilde_inf {
            self.sync_either(i);
        }
        if !self.fog[i] {
            if ct && self.fog[j] {
                self.fog[i] = true;
                self.fog_count += 1;
                self.log(t, i, Some(j), CoupledEventKind::FogChild);
            } else if c != ct {
                if count.is_some_and(|k| k < 2) {
                    self.gating_violations += 1;
                }
                self.fog[i] = true;
                self.fog_count += 1;
                self.roots += 1;
                self.log(t, i, Some(j), CoupledEventKind::Root);
            }
        }
        self.check();
    }

    fn finish(mut self, t_max: f64) -> CoupledRecord {
        self.advance(f64::INFINITY);
        let n = self.n();
        CoupledRecord {
            n,
            t_max,
            grid: std::mem::take(&mut self.grid),
            disagreement: self.rec_d,
            fog_fraction: self.rec_fog,
            roots: self.rec_roots,
            sup_disagreement: self.sup_d as f64 / n as f64,
            final_fog: self.fog_count,
            final_roots: self.roots,
            domination_violations: self.domination_violations,
            gating_violations: self.gating_violations,
            eta_final: self.eta,
            tilde_final: self.tilde,
            events: self.events,
            event_count: self.event_count,
        }
    }

    fn w_i(&self, i: usize, j: usize) -> f64 {
        self.kernels.w_i.eval(&self.features[i], &self.features[j])
    }

    fn w_e(&self, i: usize, j: usize) -> f64 {
        self.kernels.w_e.eval(&self.features[i], &self.features[j])
    }
}

/// Checks that the adjacency is symmetric and only joins pairs with
/// positive connection density, on a deterministic sample of pairs.
fn check_adjacency(graph: &SampledGraph, kernels: &KernelSpec, seed: u64) -> Result<()> {
    let n = graph.n();
    if n < 2 {
        return Ok(());
    }
    let xs = graph.features();
    let mut rng = rng::stream(rng::derive_seed(seed, &[rng::label("adjacency-check")]));
    let edges: Vec<(u32, u32)> = graph.edges().take(CONSISTENCY_PAIRS / 2).collect();
    let random = (0..CONSISTENCY_PAIRS / 2).map(|_| (rng::index(&mut rng, n) as u32, rng::index(&mut rng, n) as u32));
    for (i, j) in edges.into_iter().chain(random) {
        let (i, j) = (i as usize, j as usize);
        if i == j {
            continue;
        }
        let e = graph.has_edge(i, j);
        if e != graph.has_edge(j, i) {
            return Err(model(format!("adjacency is not symmetric at ({i}, {j})")));
        }
        if e && kernels.w_e.eval(&xs[i], &xs[j]) <= 0.0 {
            return Err(model(format!("edge ({i}, {j}) joins a pair with zero connection density")));
        }
    }
    Ok(())
}

/// Maps each CSR slot to the slot of the same edge in the row of its
/// smaller endpoint, so both directions share one arrow counter.
fn canonical_slots(graph: &SampledGraph) -> (Vec<u32>, Vec<u32>) {
    let off = graph.offsets();
    let adj = graph.adjacency();
    let mut owner = vec![0u32; adj.len()];
    let mut canon = vec![0u32; adj.len()];
    for i in 0..graph.n() {
        for s in off[i]..off[i + 1] {
            owner[s] = i as u32;
            let j = adj[s] as usize;
            canon[s] = if i < j {
                s as u32
            } else {
                let row = &adj[off[j]..off[j + 1]];
                (off[j] + row.binary_search(&(i as u32)).expect("symmetric adjacency")) as u32
            };
        }
    }
    (owner, canon)
}

/// Time of the first arrow on the unordered pair `{i, j}`.
fn first_arrow_delay(key: u64, i: usize, j: usize, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    -rng::pair_uniform(key, i as u32, j as u32).ln() / rate
}

/// Simulates the coupled pair from `state` (shared by both copies) up to
/// `config.t_max`.
pub fn run_coupled(graph: &SampledGraph, kernels: &KernelSpec, state: &EpidemicState, config: &CoupledConfig) -> Result<CoupledRecord> {
    let n = graph.n();
    if state.n() != n {
        return Err(invalid(format!("state has {} vertices, graph has {n}", state.n())));
    }
    let grid = config.grid()?;
    check_adjacency(graph, kernels, config.seed)?;
    let features = graph.features();
    let mut core = CoupledCore::new(features, kernels, state, grid, config.keep_events);
    let mut rng: SimRng = rng::stream(config.seed);
    let delay_key = rng::derive_seed(config.seed, &[rng::label("first-arrow")]);

    let (owner, canon) = canonical_slots(graph);
    let adj = graph.adjacency();
    let mut counts = vec![0u32; adj.len()];
    let gamma_bar = kernels.gamma_bound();
    let wi_bar = kernels.w_i_bound();
    let act_bar = kernels.activated_bound();
    let edge_rate = adj.len() as f64 * wi_bar;
    let nonedge_rate = n as f64 * (n as f64 - 1.0) * act_bar;

    let mut t = 0.0;
    if config.t_max > 0.0 {
        loop {
            let rec_rate = core.either.len() as f64 * gamma_bar;
            let total = rec_rate + edge_rate + nonedge_rate;
            if !(total > 0.0) {
                break;
            }
            t += rng::exp_time(&mut rng, total);
            if t > config.t_max {
                break;
            }
            core.advance(t);
            let r = rng.random::<f64>() * total;
            if r < rec_rate {
                let i = core.either[rng::index(&mut rng, core.either.len())] as usize;
                let g = kernels.gamma.eval(&features[i]);
                if rng.random::<f64>() * gamma_bar < g {
                    core.recover(t, i);
                }
            } else if r < rec_rate + edge_rate {
                let s = rng::index(&mut rng, adj.len());
                let (i, j) = (owner[s] as usize, adj[s] as usize);
                if rng.random::<f64>() * wi_bar < core.w_i(i, j) {
                    let e = canon[s] as usize;
                    counts[e] += 1;
                    let ct = counts[e] == 1 || rng.random::<f64>() < core.w_e(i, j);
                    core.arrow(t, i, j, true, ct, Some(counts[e]));
                }
            } else {
                let i = rng::index(&mut rng, n);
                let mut j = rng::index(&mut rng, n - 1);
                if j >= i {
                    j += 1;
                }
                let (wi, we) = (core.w_i(i, j), core.w_e(i, j));
                if rng.random::<f64>() * act_bar < wi * we && !graph.has_edge(i, j) {
                    let d = first_arrow_delay(delay_key, i, j, wi + core.w_i(j, i));
                    if t >= d {
                        core.arrow(t, i, j, false, true, None);
                    }
                }
            }
        }
    }
    Ok(core.finish(config.t_max))
}

/// Explicit realization of the driving Poisson measures on `[0, T]`.
///
/// Recovery atoms `(t, i, u)` have intensity `γ̄` per vertex with
/// `u ~ U(0, γ̄)`; arrow atoms `(t, i, j, u)` have intensity `w̄_I` per ordered
/// pair with `u ~ U(0, w̄_I)`. `V_1` of each pair is drawn conditionally on
/// the sampled adjacency (`V_1 ≤ w_E` exactly on edges) and `V_2, V_3, …` are
/// fresh uniforms.
#[derive(Clone, Debug)]
pub struct ArrowTable {
    pub t_max: f64,
    /// `(t, i, u)` sorted by time.
    pub recoveries: Vec<(f64, u32, f64)>,
    /// `(t, i, j, u)` for arrows from `j` to `i`, sorted by time.
    pub arrows: Vec<(f64, u32, u32, f64)>,
    /// `V_ℓ` per unordered pair `(min, max)`; index `ℓ − 1`.
    pub v: BTreeMap<(u32, u32), Vec<f64>>,
}

impl ArrowTable {
    pub fn sample(graph: &SampledGraph, kernels: &KernelSpec, t_max: f64, seed: u64) -> Result<Self> {
        let n = graph.n();
        if n > BRUTE_FORCE_MAX_N {
            return Err(invalid(format!("explicit arrow tables are limited to n ≤ {BRUTE_FORCE_MAX_N}, got {n}")));
        }
        let xs = graph.features();
        let mut rng = rng::stream(seed);
        let gamma_bar = kernels.gamma_bound();
        let wi_bar = kernels.w_i_bound();
        let mut recoveries = Vec::new();
        if gamma_bar > 0.0 {
            for i in 0..n {
                let mut t = rng::exp_time(&mut rng, gamma_bar);
                while t <= t_max {
                    recoveries.push((t, i as u32, rng.random::<f64>() * gamma_bar));
                    t += rng::exp_time(&mut rng, gamma_bar);
                }
            }
        }
        let mut arrows = Vec::new();
        let mut per_pair: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        if wi_bar > 0.0 {
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let mut t = rng::exp_time(&mut rng, wi_bar);
                    while t <= t_max {
                        arrows.push((t, i as u32, j as u32, rng.random::<f64>() * wi_bar));
                        *per_pair.entry(key(i, j)).or_default() += 1;
                        t += rng::exp_time(&mut rng, wi_bar);
                    }
                }
            }
        }
        let mut v = BTreeMap::new();
        for a in 0..n {
            for b in a + 1..n {
                let we = kernels.w_e.eval(&xs[a], &xs[b]);
                let u: f64 = rng.random();
                let v1 = if graph.has_edge(a, b) { u * we } else { we + u * (1.0 - we) };
                let extra = per_pair.get(&key(a, b)).copied().unwrap_or(0);
                let mut seq = Vec::with_capacity(extra + 1);
                seq.push(v1);
                seq.extend((0..extra).map(|_| rng.random::<f64>()));
                v.insert(key(a, b), seq);
            }
        }
        recoveries.sort_by(|a, b| a.0.total_cmp(&b.0));
        arrows.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { t_max, recoveries, arrows, v })
    }

    /// Atoms in time order: `Ok(recovery)` or `Err(arrow)`.
    fn merged(&self) -> impl Iterator<Item = std::result::Result<(f64, u32, f64), (f64, u32, u32, f64)>> + '_ {
        let (mut r, mut a) = (0, 0);
        std::iter::from_fn(move || {
            let next_r = self.recoveries.get(r);
            let next_a = self.arrows.get(a);
            match (next_r, next_a) {
                (Some(x), Some(y)) if x.0 <= y.0 => {
                    r += 1;
                    Some(Ok(*x))
                }
                (_, Some(y)) => {
                    a += 1;
                    Some(Err(*y))
                }
                (Some(x), None) => {
                    r += 1;
                    Some(Ok(*x))
                }
                (None, None) => None,
            }
        })
    }
}

fn key(i: usize, j: usize) -> (u32, u32) {
    if i < j {
        (i as u32, j as u32)
    } else {
        (j as u32, i as u32)
    }
}

/// Drives the fast simulator's state machine with the atoms of `table`.
///
/// Non-edge arrows reach the state machine only when activated for `η̃`,
/// which requires an arrow count of at least two, matching the delayed
/// stream of [`run_coupled`].
pub fn replay_coupled(
    graph: &SampledGraph,
    kernels: &KernelSpec,
    state: &EpidemicState,
    table: &ArrowTable,
    config: &CoupledConfig,
) -> Result<CoupledRecord> {
    if state.n() != graph.n() {
        return Err(invalid("state and graph sizes differ"));
    }
    let features = graph.features();
    let mut core = CoupledCore::new(features, kernels, state, config.grid()?, config.keep_events);
    let mut counts: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for atom in table.merged() {
        match atom {
            Ok((t, i, u)) => {
                if t > config.t_max {
                    break;
                }
                core.advance(t);
                let i = i as usize;
                if core.either_pos[i] != ABSENT && u <= kernels.gamma.eval(&features[i]) {
                    core.recover(t, i);
                }
            }
            Err((t, i, j, u)) => {
                if t > config.t_max {
                    break;
                }
                core.advance(t);
                let (i, j) = (i as usize, j as usize);
                if u > core.w_i(i, j) {
                    continue;
                }
                let c = counts.entry(key(i, j)).or_default();
                *c += 1;
                let count = *c;
                let v = table.v[&key(i, j)][count as usize - 1];
                let ct = v <= core.w_e(i, j);
                if graph.has_edge(i, j) {
                    core.arrow(t, i, j, true, ct || count == 1, Some(count));
                } else if count >= 2 && ct {
                    core.arrow(t, i, j, false, true, None);
                }
            }
        }
    }
    Ok(core.finish(config.t_max))
}

/// Reference implementation applying the event definitions to every atom
/// of an explicit [`ArrowTable`] drawn from `config.seed` (`n ≤ 64`).
pub fn brute_force_coupled(graph: &SampledGraph, kernels: &KernelSpec, state: &EpidemicState, config: &CoupledConfig) -> Result<CoupledRecord> {
    let table = ArrowTable::sample(graph, kernels, config.t_max, config.seed)?;
    brute_force_on_table(graph, kernels, state, &table, config)
}

pub fn brute_force_on_table(
    graph: &SampledGraph,
    kernels: &KernelSpec,
    state: &EpidemicState,
    table: &ArrowTable,
    config: &CoupledConfig,
) -> Result<CoupledRecord> {
    let n = graph.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(invalid(format!("brute-force coupling is limited to n ≤ {BRUTE_FORCE_MAX_N}, got {n}")));
    }
    if state.n() != n {
        return Err(invalid("state and graph sizes differ"));
    }
    let xs = graph.features();
    let grid = config.grid()?;
    let mut e = state.states.clone();
    let mut et = state.states.clone();
    let mut xi = vec![false; n];
    let mut root = vec![false; n];
    let mut arrows_between: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    let mut events = Vec::new();
    let mut sup_d = 0usize;
    let (mut dom_bad, mut gate_bad) = (0u64, 0u64);
    let (mut rec_d, mut rec_fog, mut rec_roots) = (Vec::new(), Vec::new(), Vec::new());
    let mut g = 0;
    let snapshot = |e: &[bool], et: &[bool], xi: &[bool], root: &[bool]| {
        let d = e.iter().zip(et).filter(|(a, b)| a != b).count();
        (d, xi.iter().filter(|b| **b).count(), root.iter().filter(|b| **b).count())
    };
    for atom in table.merged() {
        let t = match atom {
            Ok(a) => a.0,
            Err(a) => a.0,
        };
        if t > config.t_max {
            break;
        }
        while g < grid.len() && grid[g] < t {
            let (d, f, r) = snapshot(&e, &et, &xi, &root);
            rec_d.push(d as f64 / n as f64);
            rec_fog.push(f as f64 / n as f64);
            rec_roots.push(r);
            g += 1;
        }
        match atom {
            Ok((t, i, u)) => {
                let i = i as usize;
                let accepted = u <= kernels.gamma.eval(&xs[i]);
                // A and Ã.
                if accepted && e[i] {
                    e[i] = false;
                    events.push(CoupledEvent { t, vertex: i as u32, source: None, kind: CoupledEventKind::EtaRecover });
                }
                if accepted && et[i] {
                    et[i] = false;
                    events.push(CoupledEvent { t, vertex: i as u32, source: None, kind: CoupledEventKind::TildeRecover });
                }
            }
            Err((t, i, j, u)) => {
                let (i, j) = (i as usize, j as usize);
                let arrow = u <= kernels.w_i.eval(&xs[i], &xs[j]);
                if !arrow {
                    continue;
                }
                let count = arrows_between.entry(key(i, j)).or_default();
                *count += 1;
                let count = *count;
                let v = &table.v[&key(i, j)];
                let we = kernels.w_e.eval(&xs[i], &xs[j]);
                let c = v[0] <= we;
                let ct = v[count as usize - 1] <= we;
                let (ei, ej, eti, etj) = (e[i], e[j], et[i], et[j]);
                let (xi_i, xi_j) = (xi[i], xi[j]);
                // B and B̃.
                if c && !ei && ej {
                    e[i] = true;
                    events.push(CoupledEvent { t, vertex: i as u32, source: Some(j as u32), kind: CoupledEventKind::EtaInfect });
                }
                if ct && !eti && etj {
                    et[i] = true;
                    events.push(CoupledEvent { t, vertex: i as u32, source: Some(j as u32), kind: CoupledEventKind::TildeInfect });
                }
                let h_prop = !xi_i && ct && xi_j;
                let h_xor = !xi_i && (c != ct);
                let h_root = !h_prop && h_xor;
                if h_prop {
                    xi[i] = true;
                    events.push(CoupledEvent { t, vertex: i as u32, source: Some(j as u32), kind: CoupledEventKind::FogChild });
                } else if h_root {
                    if count < 2 {
                        gate_bad += 1;
                    }
                    xi[i] = true;
                    root[i] = true;
                    events.push(CoupledEvent { t, vertex: i as u32, source: Some(j as u32), kind: CoupledEventKind::Root });
                }
            }
        }
        let (d, f, _) = snapshot(&e, &et, &xi, &root);
        if d > f {
            dom_bad += 1;
        }
        sup_d = sup_d.max(d);
    }
    while g < grid.len() {
        let (d, f, r) = snapshot(&e, &et, &xi, &root);
        rec_d.push(d as f64 / n as f64);
        rec_fog.push(f as f64 / n as f64);
        rec_roots.push(r);
        g += 1;
    }
    let (_, final_fog, final_roots) = snapshot(&e, &et, &xi, &root);
    let event_count = events.len() as u64;
    Ok(CoupledRecord {
        n,
        t_max: config.t_max,
        grid,
        disagreement: rec_d,
        fog_fraction: rec_fog,
        roots: rec_roots,
        sup_disagreement: sup_d as f64 / n as f64,
        final_fog,
        final_roots,
        domination_violations: dom_bad,
        gating_violations: gate_bad,
        eta_final: e,
        tilde_final: et,
        events: config.keep_events.then_some(events),
        event_count,
    })
}

/// Monte Carlo estimate of `E[sup_{t ≤ T} d(t)]` set against the bound
/// `C_T · I_n(w_I ∧ 1)` with `C_T = 4T(T ∨ 1) C_w e^{C_w T}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub n: usize,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "I_n")]
    pub i_n: f64,
    #[serde(rename = "C_w")]
    pub c_w: f64,
    #[serde(rename = "C_T")]
    pub c_t: f64,
    pub runs: usize,
    pub mean_sup_d: f64,
    pub stderr: f64,
    /// Same mean under the convention counting mass two per disagreement.
    pub mean_sup_tv_mass2: f64,
    pub ratio_to_i_n: f64,
    /// `C_T · I_n < 1`, i.e. the bound says something about a fraction.
    pub informative: bool,
    pub bound_satisfied: bool,
}

pub fn coupling_bound_report(records: &[CoupledRecord], kernels: &KernelSpec, features: &[Feature]) -> Result<BoundReport> {
    let first = records.first().ok_or_else(|| invalid("bound report needs at least one record"))?;
    let n = features.len();
    if records.iter().any(|r| r.n != n || r.t_max != first.t_max) {
        return Err(invalid("records must share n and T"));
    }
    let t = first.t_max;
    let i_n = compute_in(features, &kernels.w_i)?;
    let c_w = kernels.effective_bound(n);
    let c_t = 4.0 * t * t.max(1.0) * c_w * (c_w * t).exp();
    let sups: Vec<f64> = records.iter().map(|r| r.sup_disagreement).collect();
    let (mean, se) = mean_stderr(&sups);
    let bound = c_t * i_n;
    Ok(BoundReport {
        n,
        t,
        i_n,
        c_w,
        c_t,
        runs: records.len(),
        mean_sup_d: mean,
        stderr: se,
        mean_sup_tv_mass2: 2.0 * mean,
        ratio_to_i_n: if i_n > 0.0 { mean / i_n } else { f64::NAN },
        informative: bound < 1.0,
        bound_satisfied: mean <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::Population;
    use crate::graph::sample_graph;
    use crate::kernel::PairFn;

    fn setup(n: usize, we: f64, wi: f64, gamma: f64, seed: u64) -> (SampledGraph, KernelSpec) {
        let k = KernelSpec::constant(we, wi, gamma).unwrap();
        let g = sample_graph(Population::homogeneous(n), &PairFn::Constant(we), seed).unwrap();
        (g, k)
    }

    fn half_infected(n: usize) -> EpidemicState {
        EpidemicState::from_flags((0..n).map(|i| i % 2 == 0).collect())
    }

    #[test]
    fn complete_graph_never_decouples() {
        let (g, k) = setup(40, 1.0, 0.1, 0.5, 1);
        let r = run_coupled(&g, &k, &half_infected(40), &CoupledConfig::new(5.0, RecordGrid::Step(0.5), 2)).unwrap();
        assert_eq!(r.final_fog, 0);
        assert_eq!(r.sup_disagreement, 0.0);
        assert!(r.event_count > 0);
    }

    #[test]
    fn empty_kernel_never_decouples() {
        let (g, k) = setup(40, 0.0, 0.5, 0.5, 1);
        let r = run_coupled(&g, &k, &half_infected(40), &CoupledConfig::new(5.0, RecordGrid::Step(0.5), 2)).unwrap();
        assert_eq!(r.final_fog, 0);
        assert_eq!(r.eta_final, r.tilde_final);
    }

    #[test]
    fn fog_dominates_and_grows() {
        let (g, k) = setup(300, 0.05, 0.4, 0.5, 3);
        let r = run_coupled(&g, &k, &EpidemicState::from_flags(vec![true; 300]), &CoupledConfig::new(10.0, RecordGrid::Step(0.1), 4))
            .unwrap();
        assert_eq!(r.domination_violations, 0);
        assert_eq!(r.gating_violations, 0);
        assert!(r.final_roots > 0);
        assert!(r.fog_fraction.windows(2).all(|w| w[0] <= w[1]));
        assert!(r.roots.windows(2).all(|w| w[0] <= w[1]));
        for (d, f) in r.disagreement.iter().zip(&r.fog_fraction) {
            assert!(d <= f);
        }
    }

    #[test]
    fn replay_matches_brute_force() {
        for seed in 0..30 {
            let (g, k) = setup(8, 0.4, 0.8, 0.6, seed);
            let state = half_infected(8);
            let cfg = CoupledConfig::new(3.0, RecordGrid::Step(0.5), 100 + seed).keep_events(true);
            let table = ArrowTable::sample(&g, &k, cfg.t_max, cfg.seed).unwrap();
            let a = replay_coupled(&g, &k, &state, &table, &cfg).unwrap();
            let b = brute_force_on_table(&g, &k, &state, &table, &cfg).unwrap();
            assert_eq!(a.events, b.events, "seed {seed}");
            assert_eq!(a.disagreement, b.disagreement);
            assert_eq!(a.fog_fraction, b.fog_fraction);
            assert_eq!(a.roots, b.roots);
        }
    }

    #[test]
    fn brute_force_refuses_large_n() {
        let (g, k) = setup(65, 0.1, 0.1, 0.1, 0);
        assert!(brute_force_coupled(&g, &k, &half_infected(65), &CoupledConfig::new(1.0, RecordGrid::Step(1.0), 0)).is_err());
    }

    #[test]
    fn zero_horizon_report() {
        let (g, k) = setup(50, 0.2, 0.3, 0.5, 0);
        let recs: Vec<CoupledRecord> = (0..10)
            .map(|s| run_coupled(&g, &k, &half_infected(50), &CoupledConfig::new(0.0, RecordGrid::Step(1.0), s)).unwrap())
            .collect();
        let rep = coupling_bound_report(&recs, &k, g.features()).unwrap();
        assert_eq!(rep.mean_sup_d, 0.0);
        assert_eq!(rep.c_t, 0.0);
        assert!(rep.bound_satisfied);
    }

    #[test]
    fn canonical_slots_pair_up() {
        let (g, _) = setup(60, 0.2, 1.0, 1.0, 5);
        let (owner, canon) = canonical_slots(&g);
        let adj = g.adjacency();
        for s in 0..adj.len() {
            let c = canon[s] as usize;
            let (i, j) = (owner[s], adj[s]);
            let (a, b) = (owner[c], adj[c]);
            assert_eq!((a.min(b), a.max(b)), (i.min(j), i.max(j)));
            assert!(a < b);
        }
    }
}
