// SPDX-License-Identifier: Apache-2.0

//! Indexed non-negative weights with proportional selection.
//!
//! [`Fenwick`] updates and searches in `O(log n)`; [`BlockSums`] updates in
//! `O(1)` and searches in `O(√n)`, which wins when each event touches many
//! weights (dense graphs).

/// Weights supporting point updates and inverse-CDF lookup.
pub trait WeightIndex {
    fn from_leaves(leaves: Vec<f64>) -> Self;
    fn len(&self) -> usize;
    fn get(&self, i: usize) -> f64;
    fn set(&mut self, i: usize, value: f64);
    fn total(&self) -> f64;
    /// Smallest `i` whose inclusive prefix sum exceeds `r`, or `len()`.
    fn find(&self, r: f64) -> usize;
    /// Recomputes all aggregates from the leaves.
    fn rebuild(&mut self);
}

#[derive(Clone, Debug)]
pub struct Fenwick {
    tree: Vec<f64>,
    leaves: Vec<f64>,
    top: usize,
}

impl Fenwick {
    pub fn new(leaves: Vec<f64>) -> Self {
        let n = leaves.len();
        let top = if n == 0 { 0 } else { 1usize << (usize::BITS - 1 - n.leading_zeros()) };
        let mut f = Self { tree: vec![0.0; n + 1], leaves, top };
        f.rebuild();
        f
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// Recomputes every internal node from the leaves in `O(n)`.
    pub fn rebuild(&mut self) {
        let n = self.leaves.len();
        self.tree[1..].copy_from_slice(&self.leaves);
        self.tree[0] = 0.0;
        for i in 1..=n {
            let parent = i + (i & i.wrapping_neg());
            if parent <= n {
                self.tree[parent] += self.tree[i];
            }
        }
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.leaves[i]
    }

    pub fn leaves(&self) -> &[f64] {
        &self.leaves
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: f64) {
        let delta = value - self.leaves[i];
        if delta == 0.0 {
            return;
        }
        self.leaves[i] = value;
        let n = self.leaves.len();
        let mut k = i + 1;
        while k <= n {
            self.tree[k] += delta;
            k += k & k.wrapping_neg();
        }
    }

    /// Replaces all leaves and rebuilds.
    pub fn reset(&mut self, leaves: impl IntoIterator<Item = f64>) {
        for (slot, v) in self.leaves.iter_mut().zip(leaves) {
            *slot = v;
        }
        self.rebuild();
    }

    pub fn total(&self) -> f64 {
        let mut k = self.leaves.len();
        let mut s = 0.0;
        while k > 0 {
            s += self.tree[k];
            k &= k - 1;
        }
        s
    }

    /// Index `i` such that the prefix sum before `i` is `≤ r` and the
    /// prefix through `i` exceeds `r`. Returns `len()` when `r` is at or
    /// beyond the total (rounding); callers treat that as a miss.
    pub fn find(&self, mut r: f64) -> usize {
        let n = self.leaves.len();
        let mut pos = 0;
        let mut step = self.top;
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= r {
                pos = next;
                r -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}

impl WeightIndex for Fenwick {
    fn from_leaves(leaves: Vec<f64>) -> Self {
        Fenwick::new(leaves)
    }
    fn len(&self) -> usize {
        Fenwick::len(self)
    }
    fn get(&self, i: usize) -> f64 {
        Fenwick::get(self, i)
    }
    fn set(&mut self, i: usize, value: f64) {
        Fenwick::set(self, i, value)
    }
    fn total(&self) -> f64 {
        Fenwick::total(self)
    }
    fn find(&self, r: f64) -> usize {
        Fenwick::find(self, r)
    }
    fn rebuild(&mut self) {
        Fenwick::rebuild(self)
    }
}

/// Two-level layout: leaves grouped in blocks of about `√n`, with a
/// running sum per block and overall.
#[derive(Clone, Debug)]
pub struct BlockSums {
    leaves: Vec<f64>,
    blocks: Vec<f64>,
    shift: u32,
    total: f64,
}

impl BlockSums {
    pub fn new(leaves: Vec<f64>) -> Self {
        let n = leaves.len().max(1);
        let shift = (usize::BITS - n.leading_zeros()).div_ceil(2);
        let nblocks = (leaves.len() >> shift) + 1;
        let mut b = Self { leaves, blocks: vec![0.0; nblocks], shift, total: 0.0 };
        b.rebuild();
        b
    }
}

impl WeightIndex for BlockSums {
    fn from_leaves(leaves: Vec<f64>) -> Self {
        BlockSums::new(leaves)
    }

    fn len(&self) -> usize {
        self.leaves.len()
    }

    #[inline]
    fn get(&self, i: usize) -> f64 {
        self.leaves[i]
    }

    #[inline]
    fn set(&mut self, i: usize, value: f64) {
        let delta = value - self.leaves[i];
        self.leaves[i] = value;
        self.blocks[i >> self.shift] += delta;
        self.total += delta;
    }

    fn total(&self) -> f64 {
        self.total
    }

    fn find(&self, mut r: f64) -> usize {
        for (b, &sum) in self.blocks.iter().enumerate() {
            if r < sum {
                let lo = b << self.shift;
                let hi = ((b + 1) << self.shift).min(self.leaves.len());
                for i in lo..hi {
                    let w = self.leaves[i];
                    if r < w {
                        return i;
                    }
                    r -= w;
                }
                return self.leaves.len();
            }
            r -= sum;
        }
        self.leaves.len()
    }

    fn rebuild(&mut self) {
        self.blocks.iter_mut().for_each(|b| *b = 0.0);
        for (i, &w) in self.leaves.iter().enumerate() {
            self.blocks[i >> self.shift] += w;
        }
        self.total = self.blocks.iter().sum();
    }
}
