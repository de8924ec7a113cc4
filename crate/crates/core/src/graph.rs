// SPDX-License-Identifier: Apache-2.0

//! W-random graphs: sampling, connected components and graph statistics.
//!
//! Each unordered pair `{i, j}` is an edge independently with probability
//! `w_E(x_i, x_j)`. Pairs are enumerated by the linear index
//! `k = j(j − 1)/2 + i` (`i < j`). The production sampler draws candidate
//! pairs from a constant-`p_max` Bernoulli process by geometric skips and
//! keeps a candidate carrying the conditional uniform `v ≤ p_max` iff
//! `v ≤ w_E(x_i, x_j)`, which is the naive rule `V(i, j) ≤ w_E` restricted to
//! the pairs where `V(i, j) ≤ p_max`.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;

use crate::error::{invalid, model, Result};
use crate::feature::{Feature, Population};
use crate::kernel::PairFn;
use crate::rng::{self, SimRng};

/// Undirected simple graph in compressed sparse row form, with its
/// population and connected components.
#[derive(Clone, Debug)]
pub struct SampledGraph {
    population: Population,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    component_label: Vec<u32>,
    component_sizes: Vec<usize>,
    giant_label: u32,
}

impl SampledGraph {
    /// Builds a graph from an edge list; rejects self-loops, duplicates and
    /// out-of-range endpoints.
    pub fn from_edges(population: Population, edges: &[(u32, u32)]) -> Result<Self> {
        let n = population.n();
        for &(a, b) in edges {
            if a == b {
                return Err(invalid(format!("self-loop at vertex {a}")));
            }
            if a as usize >= n || b as usize >= n {
                return Err(invalid(format!("edge ({a}, {b}) out of range for n = {n}")));
            }
        }
        let g = Self::from_pairs(population, edges);
        if g.neighbors.len() != 2 * edges.len() {
            return Err(invalid("duplicate edges in edge list"));
        }
        Ok(g)
    }

    fn from_pairs(population: Population, edges: &[(u32, u32)]) -> Self {
        let n = population.n();
        let mut degree = vec![0usize; n];
        for &(a, b) in edges {
            degree[a as usize] += 1;
            degree[b as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0u32; offsets[n]];
        for &(a, b) in edges {
            neighbors[fill[a as usize]] = b;
            fill[a as usize] += 1;
            neighbors[fill[b as usize]] = a;
            fill[b as usize] += 1;
        }
        let mut total = 0;
        let mut write = 0;
        // Sort and deduplicate each row in place, compacting the array.
        let mut new_offsets = Vec::with_capacity(n + 1);
        new_offsets.push(0);
        for v in 0..n {
            let row = &mut neighbors[offsets[v]..offsets[v + 1]];
            row.sort_unstable();
            let mut last = None;
            for idx in offsets[v]..offsets[v + 1] {
                let x = neighbors[idx];
                if last != Some(x) {
                    neighbors[write] = x;
                    write += 1;
                    last = Some(x);
                }
            }
            total = write;
            new_offsets.push(total);
        }
        neighbors.truncate(total);
        let (component_label, component_sizes) = label_components(&new_offsets, &neighbors);
        let giant_label = giant_of(&component_sizes);
        Self { population, offsets: new_offsets, neighbors, component_label, component_sizes, giant_label }
    }

    pub fn n(&self) -> usize {
        self.population.n()
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn features(&self) -> &[Feature] {
        &self.population.features
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Sorted neighbours of `v`.
    #[inline]
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Row offsets of the CSR layout (`n + 1` entries).
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Concatenated neighbour lists (`2 · edge_count` entries).
    pub fn adjacency(&self) -> &[u32] {
        &self.neighbors
    }

    /// `O(log deg)` membership test.
    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&(j as u32)).is_ok()
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.n()).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .filter(move |&&j| j as usize > i)
                .map(move |&j| (i as u32, j))
        })
    }

    pub fn component_label(&self) -> &[u32] {
        &self.component_label
    }

    pub fn component_count(&self) -> usize {
        self.component_sizes.len()
    }

    pub fn giant_size(&self) -> usize {
        self.component_sizes[self.giant_label as usize]
    }

    pub fn giant_fraction(&self) -> f64 {
        self.giant_size() as f64 / self.n() as f64
    }

    pub fn giant_mask(&self) -> Vec<bool> {
        self.component_label.iter().map(|&c| c == self.giant_label).collect()
    }

    /// Writes the edge list: header `# n=<n> seed=<seed>`, then `i j` per line.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# n={} seed={}", self.n(), self.population.source_seed)?;
        for (i, j) in self.edges() {
            writeln!(out, "{i} {j}")?;
        }
        Ok(())
    }
}

/// Breadth-first labelling; labels follow the smallest vertex of each component.
fn label_components(offsets: &[usize], neighbors: &[u32]) -> (Vec<u32>, Vec<usize>) {
    let n = offsets.len() - 1;
    let mut label = vec![u32::MAX; n];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for root in 0..n {
        if label[root] != u32::MAX {
            continue;
        }
        let id = sizes.len() as u32;
        label[root] = id;
        queue.push_back(root);
        let mut size = 0;
        while let Some(v) = queue.pop_front() {
            size += 1;
            for &w in &neighbors[offsets[v]..offsets[v + 1]] {
                if label[w as usize] == u32::MAX {
                    label[w as usize] = id;
                    queue.push_back(w as usize);
                }
            }
        }
        sizes.push(size);
    }
    (label, sizes)
}

/// Largest component; ties go to the smallest label, i.e. the component
/// with the smallest minimum vertex.
fn giant_of(sizes: &[usize]) -> u32 {
    let mut best = 0;
    for (c, &s) in sizes.iter().enumerate() {
        if s > sizes[best] {
            best = c;
        }
    }
    best as u32
}

/// Largest connected component of a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct GiantComponent {
    pub giant_size: usize,
    pub component_label: Vec<u32>,
    pub member_mask: Vec<bool>,
}

pub fn giant_component(graph: &SampledGraph) -> GiantComponent {
    GiantComponent {
        giant_size: graph.giant_size(),
        component_label: graph.component_label().to_vec(),
        member_mask: graph.giant_mask(),
    }
}

/// Number of unordered pairs among `n` vertices.
pub fn pair_count(n: usize) -> u64 {
    let n = n as u64;
    n * n.saturating_sub(1) / 2
}

/// Linear index of the pair `{i, j}`, `i ≠ j`.
#[inline]
pub fn pair_index(i: u32, j: u32) -> u64 {
    let (a, b) = if i < j { (u64::from(i), u64::from(j)) } else { (u64::from(j), u64::from(i)) };
    b * (b - 1) / 2 + a
}

/// Inverse of [`pair_index`]: returns `(i, j)` with `i < j`.
#[inline]
pub fn pair_from_index(k: u64) -> (u32, u32) {
    let mut j = ((1.0 + (1.0 + 8.0 * k as f64).sqrt()) / 2.0) as u64;
    while j * (j - 1) / 2 > k {
        j -= 1;
    }
    while (j + 1) * j / 2 <= k {
        j += 1;
    }
    ((k - j * (j - 1) / 2) as u32, j as u32)
}

/// Stream of candidate pairs for the thinned sampler: pair indices in
/// increasing order, each with a uniform `v` on `[0, p_max]`.
pub trait CandidateSource {
    fn next_candidate(&mut self, p_max: f64, total: u64) -> Option<(u64, f64)>;
}

/// Geometric skip-sampling of a constant-`p_max` Bernoulli process.
pub struct GeometricCandidates {
    rng: SimRng,
    next: u64,
}

impl GeometricCandidates {
    pub fn new(seed: u64) -> Self {
        Self { rng: rng::stream(seed), next: 0 }
    }
}

impl CandidateSource for GeometricCandidates {
    fn next_candidate(&mut self, p_max: f64, total: u64) -> Option<(u64, f64)> {
        let skip = if p_max >= 1.0 {
            0.0
        } else {
            (rng::open01(&mut self.rng).ln() / (-p_max).ln_1p()).floor()
        };
        let remaining = total.saturating_sub(self.next);
        if skip >= remaining as f64 {
            self.next = total;
            return None;
        }
        let k = self.next + skip as u64;
        self.next = k + 1;
        let v = p_max * self.rng.random::<f64>();
        Some((k, v))
    }
}

/// Replays a table of per-pair uniforms (indexed by [`pair_index`]): the
/// candidates are the pairs whose uniform is at most `p_max`.
pub struct TableCandidates<'a> {
    table: &'a [f64],
    next: usize,
}

impl<'a> TableCandidates<'a> {
    pub fn new(table: &'a [f64]) -> Self {
        Self { table, next: 0 }
    }
}

impl CandidateSource for TableCandidates<'_> {
    fn next_candidate(&mut self, p_max: f64, total: u64) -> Option<(u64, f64)> {
        let end = (total as usize).min(self.table.len());
        while self.next < end {
            let k = self.next;
            self.next += 1;
            if self.table[k] <= p_max {
                return Some((k as u64, self.table[k]));
            }
        }
        None
    }
}

fn check_p_max(w_e: &PairFn) -> Result<f64> {
    let p_max = w_e.bound();
    if !(0.0..=1.0).contains(&p_max) {
        return Err(model(format!("connection density bound {p_max} is outside [0, 1]")));
    }
    Ok(p_max)
}

/// Skip-and-thin sampler driven by an arbitrary candidate source.
pub fn sample_graph_thinned<C: CandidateSource>(
    population: Population,
    w_e: &PairFn,
    source: &mut C,
) -> Result<SampledGraph> {
    let p_max = check_p_max(w_e)?;
    let n = population.n();
    let mut edges = Vec::new();
    if p_max > 0.0 {
        let total = pair_count(n);
        let constant = w_e.as_constant();
        let feats = &population.features;
        while let Some((k, v)) = source.next_candidate(p_max, total) {
            let (i, j) = pair_from_index(k);
            let p = match constant {
                Some(c) => c,
                None => w_e.eval(&feats[i as usize], &feats[j as usize]),
            };
            if p > p_max || p < 0.0 {
                return Err(model(format!("w_E = {p} at pair ({i}, {j}) exceeds its bound {p_max}")));
            }
            if v <= p {
                edges.push((i, j));
            }
        }
    }
    Ok(SampledGraph::from_pairs(population, &edges))
}

/// Samples `G⁽ⁿ⁾` with per-pair probability `w_E(x_i, x_j)`.
pub fn sample_graph(population: Population, w_e: &PairFn, seed: u64) -> Result<SampledGraph> {
    sample_graph_thinned(population, w_e, &mut GeometricCandidates::new(seed))
}

/// Reference `O(n²)` sampler: `{i, j}` is an edge iff `coin(i, j) ≤ w_E(x_i, x_j)`.
pub fn sample_graph_naive(
    population: Population,
    w_e: &PairFn,
    mut coin: impl FnMut(u32, u32) -> f64,
) -> Result<SampledGraph> {
    check_p_max(w_e)?;
    let n = population.n() as u32;
    let mut edges = Vec::new();
    for j in 1..n {
        for i in 0..j {
            let p = w_e.eval(&population.features[i as usize], &population.features[j as usize]);
            if coin(i, j) <= p {
                edges.push((i, j));
            }
        }
    }
    Ok(SampledGraph::from_pairs(population, &edges))
}

/// `J⁽ⁿ⁾ = n⁻¹ Σ_{i ∼ j} w_I(x_i, x_j)` over ordered adjacent pairs, so each
/// edge contributes `w_I(x_i, x_j) + w_I(x_j, x_i)`. With `ordered = false`
/// the sum runs over unordered edges (half the symmetric value).
pub fn compute_jn(graph: &SampledGraph, w_i: &PairFn, ordered: bool) -> f64 {
    let feats = graph.features();
    let mut total = 0.0;
    for i in 0..graph.n() {
        for &j in graph.neighbors(i) {
            total += w_i.eval(&feats[i], &feats[j as usize]);
        }
    }
    if !ordered {
        total /= 2.0;
    }
    total / graph.n() as f64
}
