// SPDX-License-Identifier: Apache-2.0

//! Rate kernels, scaling families and the model diagnostics built on them.
//!
//! A [`KernelSpec`] holds the three functions that drive one population:
//! the connection density `w_E(x, y) ∈ [0, 1]`, the infection rate
//! `w_I(x, y)` of a susceptible with feature `x` by an infected neighbour
//! with feature `y`, and the recovery rate `γ(x)`. A [`ModelSpec`] ties a
//! base kernel to a feature space and to a rule giving the kernels for each
//! population size `n`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{invalid, model, Result};
use crate::feature::{Feature, FeatureSpace, MeasureSpec};
use crate::quadrature::Quadrature;
use crate::rng;

type PointClosure = Arc<dyn Fn(&Feature) -> f64 + Send + Sync>;
type PairClosure = Arc<dyn Fn(&Feature, &Feature) -> f64 + Send + Sync>;
type RadialClosure = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A non-negative function on 𝕏.
#[derive(Clone)]
pub enum PointFn {
    Constant(f64),
    PerClass(Vec<f64>),
    /// Black-box function with a declared upper bound.
    Custom { f: PointClosure, bound: f64 },
}

impl PointFn {
    pub fn custom(bound: f64, f: impl Fn(&Feature) -> f64 + Send + Sync + 'static) -> Self {
        PointFn::Custom { f: Arc::new(f), bound }
    }

    #[inline]
    pub fn eval(&self, x: &Feature) -> f64 {
        match self {
            PointFn::Constant(c) => *c,
            PointFn::PerClass(v) => v[x.class().expect("per-class function needs a class feature")],
            PointFn::Custom { f, .. } => f(x),
        }
    }

    /// Declared supremum.
    pub fn bound(&self) -> f64 {
        match self {
            PointFn::Constant(c) => *c,
            PointFn::PerClass(v) => v.iter().copied().fold(0.0, f64::max),
            PointFn::Custom { bound, .. } => *bound,
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            PointFn::Constant(c) => Some(*c),
            _ => None,
        }
    }
}

impl fmt::Debug for PointFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointFn::Constant(c) => write!(f, "Constant({c})"),
            PointFn::PerClass(v) => write!(f, "PerClass({v:?})"),
            PointFn::Custom { bound, .. } => write!(f, "Custom(bound = {bound})"),
        }
    }
}

/// Shape of a geometric connection kernel as a function of distance.
#[derive(Clone)]
pub enum RadialProfile {
    /// `1{|x − y| < radius}`.
    Indicator { radius: f64 },
    Custom { g: RadialClosure, bound: f64 },
}

impl RadialProfile {
    #[inline]
    fn eval(&self, d: f64) -> f64 {
        match self {
            RadialProfile::Indicator { radius } => f64::from(u8::from(d < *radius)),
            RadialProfile::Custom { g, .. } => g(d),
        }
    }

    fn bound(&self) -> f64 {
        match self {
            RadialProfile::Indicator { .. } => 1.0,
            RadialProfile::Custom { bound, .. } => *bound,
        }
    }
}

/// A non-negative function on 𝕏².
#[derive(Clone)]
pub enum PairFn {
    Constant(f64),
    /// Row-major `k × k` table indexed by class labels.
    ClassTable { k: usize, values: Vec<f64> },
    /// Function of the Euclidean distance between point features.
    Radial(RadialProfile),
    /// `left(x) · inner(x, y) · right(y)`.
    Product { left: PointFn, inner: Box<PairFn>, right: PointFn },
    /// Pointwise product of two kernels.
    Mul(Box<PairFn>, Box<PairFn>),
    Scaled { factor: f64, inner: Box<PairFn> },
    Custom { f: PairClosure, bound: f64 },
}

impl PairFn {
    pub fn custom(
        bound: f64,
        f: impl Fn(&Feature, &Feature) -> f64 + Send + Sync + 'static,
    ) -> Self {
        PairFn::Custom { f: Arc::new(f), bound }
    }

    pub fn table(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(invalid("class table must be a non-empty square matrix"));
        }
        Ok(PairFn::ClassTable { k, values: rows.concat() })
    }

    #[inline]
    pub fn eval(&self, x: &Feature, y: &Feature) -> f64 {
        match self {
            PairFn::Constant(c) => *c,
            PairFn::ClassTable { k, values } => {
                let (a, b) = (
                    x.class().expect("class table needs class features"),
                    y.class().expect("class table needs class features"),
                );
                values[a * k + b]
            }
            PairFn::Radial(profile) => {
                profile.eval(x.distance(y).expect("radial kernel needs point features"))
            }
            PairFn::Product { left, inner, right } => left.eval(x) * inner.eval(x, y) * right.eval(y),
            PairFn::Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            PairFn::Scaled { factor, inner } => factor * inner.eval(x, y),
            PairFn::Custom { f, .. } => f(x, y),
        }
    }

    /// Declared supremum (exact for constants and class tables).
    pub fn bound(&self) -> f64 {
        match self {
            PairFn::Constant(c) => *c,
            PairFn::ClassTable { values, .. } => values.iter().copied().fold(0.0, f64::max),
            PairFn::Radial(p) => p.bound(),
            PairFn::Product { left, inner, right } => left.bound() * inner.bound() * right.bound(),
            PairFn::Mul(a, b) => product_bound(a, b),
            PairFn::Scaled { factor, inner } => factor * inner.bound(),
            PairFn::Custom { bound, .. } => *bound,
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            PairFn::Constant(c) => Some(*c),
            PairFn::Scaled { factor, inner } => inner.as_constant().map(|c| factor * c),
            PairFn::Mul(a, b) => Some(a.as_constant()? * b.as_constant()?),
            _ => None,
        }
    }

    /// `factor · self`, folded into constants and tables when possible.
    pub fn scaled(&self, factor: f64) -> PairFn {
        match self {
            PairFn::Constant(c) => PairFn::Constant(c * factor),
            PairFn::ClassTable { k, values } => PairFn::ClassTable {
                k: *k,
                values: values.iter().map(|v| v * factor).collect(),
            },
            other => PairFn::Scaled { factor, inner: Box::new(other.clone()) },
        }
    }

    /// Pointwise product, folded into constants and tables when possible.
    pub fn times(&self, other: &PairFn) -> PairFn {
        match (self, other) {
            (PairFn::Constant(a), PairFn::Constant(b)) => PairFn::Constant(a * b),
            (PairFn::Constant(a), b) | (b, PairFn::Constant(a)) => b.scaled(*a),
            (PairFn::ClassTable { k, values: a }, PairFn::ClassTable { k: k2, values: b })
                if k == k2 =>
            {
                PairFn::ClassTable { k: *k, values: a.iter().zip(b).map(|(x, y)| x * y).collect() }
            }
            (a, b) => PairFn::Mul(Box::new(a.clone()), Box::new(b.clone())),
        }
    }

    /// Checks that the kernel can be evaluated on features of `space`.
    pub fn supports(&self, space: &FeatureSpace) -> bool {
        let point_space = matches!(
            space,
            FeatureSpace::Interval01 | FeatureSpace::Hypercube(_)
        ) || matches!(space, FeatureSpace::Explicit(p) if p.iter().all(|f| f.coords().is_some()));
        match self {
            PairFn::Constant(_) | PairFn::Custom { .. } => true,
            PairFn::ClassTable { k, .. } => space.classes() == Some(*k),
            PairFn::Radial(_) => point_space,
            PairFn::Product { left, inner, right } => {
                point_fn_supports(left, space) && inner.supports(space) && point_fn_supports(right, space)
            }
            PairFn::Mul(a, b) => a.supports(space) && b.supports(space),
            PairFn::Scaled { inner, .. } => inner.supports(space),
        }
    }
}

fn point_fn_supports(f: &PointFn, space: &FeatureSpace) -> bool {
    match f {
        PointFn::PerClass(v) => space.classes() == Some(v.len()),
        _ => true,
    }
}

impl fmt::Debug for PairFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairFn::Constant(c) => write!(f, "Constant({c})"),
            PairFn::ClassTable { k, values } => write!(f, "ClassTable({k}, {values:?})"),
            PairFn::Radial(RadialProfile::Indicator { radius }) => write!(f, "Indicator(r = {radius})"),
            PairFn::Radial(RadialProfile::Custom { bound, .. }) => write!(f, "Radial(bound = {bound})"),
            PairFn::Product { left, inner, right } => write!(f, "Product({left:?}, {inner:?}, {right:?})"),
            PairFn::Mul(a, b) => write!(f, "Mul({a:?}, {b:?})"),
            PairFn::Scaled { factor, inner } => write!(f, "{factor} * {inner:?}"),
            PairFn::Custom { bound, .. } => write!(f, "Custom(bound = {bound})"),
        }
    }
}

/// Upper bound of the pointwise product `a · b`.
pub fn product_bound(a: &PairFn, b: &PairFn) -> f64 {
    match (a, b) {
        (PairFn::ClassTable { k, values: x }, PairFn::ClassTable { k: k2, values: y }) if k == k2 => {
            x.iter().zip(y).map(|(p, q)| p * q).fold(0.0, f64::max)
        }
        _ => a.bound() * b.bound(),
    }
}

/// Which built-in family a kernel comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelTag {
    Constant,
    Sbm,
    Geometric,
    Factorized,
    Explicit,
}

impl KernelTag {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelTag::Constant => "constant",
            KernelTag::Sbm => "sbm",
            KernelTag::Geometric => "geometric",
            KernelTag::Factorized => "factorized",
            KernelTag::Explicit => "explicit",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "constant" => KernelTag::Constant,
            "sbm" => KernelTag::Sbm,
            "geometric" => KernelTag::Geometric,
            "factorized" => KernelTag::Factorized,
            "explicit" => KernelTag::Explicit,
            other => return Err(invalid(format!("unknown kernel tag {other:?}"))),
        })
    }
}

/// Connection density, infection rate and recovery rate of one population.
#[derive(Clone, Debug)]
pub struct KernelSpec {
    pub tag: KernelTag,
    pub w_e: PairFn,
    pub w_i: PairFn,
    pub gamma: PointFn,
}

impl KernelSpec {
    pub fn constant(w_e: f64, w_i: f64, gamma: f64) -> Result<Self> {
        let k = Self {
            tag: KernelTag::Constant,
            w_e: PairFn::Constant(w_e),
            w_i: PairFn::Constant(w_i),
            gamma: PointFn::Constant(gamma),
        };
        k.check_declared()?;
        Ok(k)
    }

    /// Stochastic block model with `k` classes.
    pub fn sbm(w_e: &[Vec<f64>], w_i: &[Vec<f64>], gamma: &[f64]) -> Result<Self> {
        let we = PairFn::table(w_e)?;
        let wi = PairFn::table(w_i)?;
        if w_i.len() != w_e.len() || gamma.len() != w_e.len() {
            return Err(invalid("SBM matrices and recovery vector must share the class count"));
        }
        for (q, row) in w_e.iter().enumerate() {
            for (r, v) in row.iter().enumerate() {
                if *v != w_e[r][q] {
                    return Err(model(format!("w_E is not symmetric at ({q}, {r})")));
                }
            }
        }
        let k = Self {
            tag: KernelTag::Sbm,
            w_e: we,
            w_i: wi,
            gamma: PointFn::PerClass(gamma.to_vec()),
        };
        k.check_declared()?;
        Ok(k)
    }

    /// Geometric random graph `w_E = 1{|x − y| < radius}` with constant rates.
    pub fn geometric(radius: f64, w_i: f64, gamma: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(invalid("geometric radius must be positive"));
        }
        Self::geometric_profile(RadialProfile::Indicator { radius }, w_i, gamma)
    }

    pub fn geometric_profile(profile: RadialProfile, w_i: f64, gamma: f64) -> Result<Self> {
        let k = Self {
            tag: KernelTag::Geometric,
            w_e: PairFn::Radial(profile),
            w_i: PairFn::Constant(w_i),
            gamma: PointFn::Constant(gamma),
        };
        k.check_declared()?;
        Ok(k)
    }

    /// `w_I(x, y) = scale · β(x) θ(y)`: susceptibility times infectiousness.
    pub fn factorized(
        w_e: PairFn,
        beta: PointFn,
        theta: PointFn,
        scale: f64,
        gamma: PointFn,
    ) -> Result<Self> {
        let k = Self {
            tag: KernelTag::Factorized,
            w_e,
            w_i: PairFn::Product { left: beta, inner: Box::new(PairFn::Constant(scale)), right: theta },
            gamma,
        };
        k.check_declared()?;
        Ok(k)
    }

    pub fn explicit(w_e: PairFn, w_i: PairFn, gamma: PointFn) -> Result<Self> {
        let k = Self { tag: KernelTag::Explicit, w_e, w_i, gamma };
        k.check_declared()?;
        Ok(k)
    }

    fn check_declared(&self) -> Result<()> {
        let (e, i, g) = (self.w_e.bound(), self.w_i.bound(), self.gamma.bound());
        if !(0.0..=1.0).contains(&e) {
            return Err(model(format!("w_E bound {e} is outside [0, 1]")));
        }
        if !(i.is_finite() && i >= 0.0 && g.is_finite() && g >= 0.0) {
            return Err(model(format!("rates must be bounded and non-negative (w_I ≤ {i}, γ ≤ {g})")));
        }
        if let PairFn::ClassTable { values, .. } = &self.w_e {
            if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(model("w_E table entries must lie in [0, 1]"));
            }
        }
        for t in [&self.w_i, &self.w_e] {
            if let PairFn::ClassTable { values, .. } = t {
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(model("kernel table entries must be finite and non-negative"));
                }
            }
        }
        if let PointFn::PerClass(v) = &self.gamma {
            if v.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
                return Err(model("recovery rates must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Declared bound C on `w_I`.
    pub fn w_i_bound(&self) -> f64 {
        self.w_i.bound()
    }

    pub fn gamma_bound(&self) -> f64 {
        self.gamma.bound()
    }

    /// Bound on `w_E · w_I`, the rate of activated arrows between a pair.
    pub fn activated_bound(&self) -> f64 {
        product_bound(&self.w_e, &self.w_i)
    }

    /// Bound on `w⁽ⁿ⁾ = n w_E w_I` (used as C_w).
    pub fn effective_bound(&self, n: usize) -> f64 {
        n as f64 * self.activated_bound()
    }

    /// `w⁽ⁿ⁾(x, y) = n · w_E(x, y) · w_I(x, y)` as a kernel.
    pub fn effective_kernel(&self, n: usize) -> PairFn {
        self.w_e.times(&self.w_i).scaled(n as f64)
    }

    pub fn supports(&self, space: &FeatureSpace) -> bool {
        self.w_e.supports(space)
            && self.w_i.supports(space)
            && point_fn_supports(&self.gamma, space)
    }

    /// Checks the declared bounds, the range of `w_E` and its symmetry on a
    /// deterministic grid (64 points per axis) plus 10⁴ random pairs.
    pub fn verify(&self, space: &FeatureSpace, seed: u64) -> Result<()> {
        if !self.supports(space) {
            return Err(model(format!(
                "{} kernel cannot be evaluated on {}",
                self.tag.as_str(),
                space.describe()
            )));
        }
        let grid = test_grid(space);
        let mut rng = rng::stream(seed);
        let randoms: Vec<Feature> = (0..2 * RANDOM_PAIRS).map(|_| random_feature(space, &mut rng)).collect();
        let pairs = grid
            .iter()
            .flat_map(|x| grid.iter().map(move |y| (x, y)))
            .chain(randoms.chunks(2).map(|c| (&c[0], &c[1])));
        let (ce, ci, cg) = (self.w_e.bound(), self.w_i.bound(), self.gamma.bound());
        for (x, y) in pairs {
            let (e, e_rev, i) = (self.w_e.eval(x, y), self.w_e.eval(y, x), self.w_i.eval(x, y));
            if !(0.0..=1.0).contains(&e) || e > ce {
                return Err(model(format!("w_E({x:?}, {y:?}) = {e} exceeds [0, {ce}]")));
            }
            if e != e_rev {
                return Err(model(format!("w_E is not symmetric at ({x:?}, {y:?})")));
            }
            if !(i >= 0.0 && i <= ci) {
                return Err(model(format!("w_I({x:?}, {y:?}) = {i} exceeds [0, {ci}]")));
            }
        }
        for x in grid.iter().chain(&randoms) {
            let g = self.gamma.eval(x);
            if !(g >= 0.0 && g <= cg) {
                return Err(model(format!("γ({x:?}) = {g} exceeds [0, {cg}]")));
            }
        }
        Ok(())
    }
}

const RANDOM_PAIRS: usize = 10_000;

/// Deterministic evaluation grid: 64 midpoints per axis (dimension ≤ 2),
/// every class, or every explicit point.
pub fn test_grid(space: &FeatureSpace) -> Vec<Feature> {
    match space {
        FeatureSpace::Interval01 | FeatureSpace::Hypercube(1) | FeatureSpace::Hypercube(2) => {
            Quadrature::for_measure(space, &MeasureSpec::UniformOnSpace, 64)
                .map(|q| q.nodes().to_vec())
                .unwrap_or_default()
        }
        FeatureSpace::Hypercube(_) => Vec::new(),
        FeatureSpace::Discrete(k) => (0..*k).map(Feature::Class).collect(),
        FeatureSpace::Explicit(points) => points.clone(),
    }
}

fn random_feature<R: Rng + ?Sized>(space: &FeatureSpace, rng: &mut R) -> Feature {
    match space {
        FeatureSpace::Interval01 => Feature::scalar(rng.random()),
        FeatureSpace::Hypercube(d) => Feature::Point((0..*d).map(|_| rng.random()).collect()),
        FeatureSpace::Discrete(k) => Feature::Class(rng::index(rng, *k)),
        FeatureSpace::Explicit(p) => p[rng::index(rng, p.len())].clone(),
    }
}

/// `w⁽ⁿ⁾(x, y) = n · w_E(x, y) · w_I(x, y)`.
pub fn effective_w(
    kernels: &KernelSpec,
    space: &FeatureSpace,
    n: usize,
    x: &Feature,
    y: &Feature,
) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n must be >= 1"));
    }
    space.check(x)?;
    space.check(y)?;
    Ok(n as f64 * kernels.w_e.eval(x, y) * kernels.w_i.eval(x, y))
}

/// `I_n(w_I ∧ 1) = n⁻² Σ_{i,j} (w_I(x_i, x_j) ∧ 1)` over all ordered pairs,
/// diagonal included.
pub fn compute_in(features: &[Feature], w_i: &PairFn) -> Result<f64> {
    let n = features.len();
    if n == 0 {
        return Err(invalid("I_n needs at least one feature"));
    }
    let nf = n as f64;
    if let Some(c) = w_i.as_constant() {
        return Ok(c.min(1.0));
    }
    if let PairFn::ClassTable { k, values } = w_i {
        let mut counts = vec![0.0f64; *k];
        for f in features {
            counts[f.class().ok_or_else(|| invalid("class table needs class features"))?] += 1.0;
        }
        let mut total = 0.0;
        for a in 0..*k {
            for b in 0..*k {
                total += counts[a] * counts[b] * values[a * k + b].min(1.0);
            }
        }
        return Ok(total / (nf * nf));
    }
    let mut total = 0.0;
    for x in features {
        let row: f64 = features.iter().map(|y| w_i.eval(x, y).min(1.0)).sum();
        total += row;
    }
    Ok(total / (nf * nf))
}

/// Expected value of [`compute_in`] for `n` i.i.d. features with law μ:
/// `n⁻¹ ∫ g(x, x) dμ + (1 − n⁻¹) ∫∫ g dμ dμ`.
pub fn expected_in(quad: &Quadrature, w_i: &PairFn, n: usize) -> f64 {
    let g = |x: &Feature, y: &Feature| w_i.eval(x, y).min(1.0);
    let inv = 1.0 / n as f64;
    inv * quad.integrate_diagonal(g) + (1.0 - inv) * quad.integrate_pairs(g)
}

/// Sparsity scaling `w_I⁽ⁿ⁾ = base_wi (n / n0)^(−α)`,
/// `w_E⁽ⁿ⁾ = target_w / (n w_I⁽ⁿ⁾)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingFamily {
    pub alpha: f64,
    pub n0: usize,
    pub base_wi: f64,
    pub target_w: f64,
}

impl ScalingFamily {
    /// The family used throughout the experiments: n0 = 2000,
    /// `w_I⁽ⁿ⁰⁾ = 1.2` and `w = 3`.
    pub fn standard(alpha: f64) -> Self {
        Self { alpha, n0: 2000, base_wi: 1.2, target_w: 3.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(invalid("alpha must be finite and >= 0"));
        }
        if self.n0 == 0 {
            return Err(invalid("n0 must be >= 1"));
        }
        if !(self.base_wi > 0.0 && self.target_w >= 0.0) {
            return Err(invalid("base_wi must be > 0 and target_w >= 0"));
        }
        Ok(())
    }

    pub fn w_i(&self, n: usize) -> f64 {
        self.base_wi * (n as f64 / self.n0 as f64).powf(-self.alpha)
    }

    pub fn w_e(&self, n: usize) -> f64 {
        self.target_w / (n as f64 * self.w_i(n))
    }

    /// Constant kernels of the homogeneous family at size `n`.
    pub fn homogeneous(&self, n: usize, gamma: f64) -> Result<KernelSpec> {
        self.validate()?;
        let w_e = self.w_e(n);
        if w_e > 1.0 {
            return Err(model(format!(
                "w_E = {w_e} > 1 at n = {n} (alpha = {}); the family is not admissible",
                self.alpha
            )));
        }
        KernelSpec::constant(w_e, self.w_i(n), gamma)
    }
}

/// How the base kernel of a model depends on the population size.
#[derive(Clone, Debug, PartialEq)]
pub enum Scaling {
    /// The base kernel is used as given for every `n`.
    Fixed,
    /// `w_E⁽ⁿ⁾ = w_E`, `w_I⁽ⁿ⁾ = w_I / n`.
    Dense,
    /// `w_I⁽ⁿ⁾ = shape_I · base_wi (n/n0)^(−α)`,
    /// `w_E⁽ⁿ⁾ = shape_E · target_w / (n base_wi (n/n0)^(−α))`.
    Family(ScalingFamily),
}

/// One experiment family: features, reference measure and kernels for all `n`.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub space: FeatureSpace,
    pub measure: MeasureSpec,
    pub base: KernelSpec,
    pub scaling: Scaling,
}

impl ModelSpec {
    pub fn new(space: FeatureSpace, measure: MeasureSpec, base: KernelSpec, scaling: Scaling) -> Result<Self> {
        space.validate()?;
        measure.validate(&space)?;
        if !base.supports(&space) {
            return Err(model(format!(
                "{} kernel cannot be evaluated on {}",
                base.tag.as_str(),
                space.describe()
            )));
        }
        if let Scaling::Family(f) = &scaling {
            f.validate()?;
        }
        Ok(Self { space, measure, base, scaling })
    }

    /// Homogeneous Erdős–Rényi model of the given scaling family.
    pub fn homogeneous(family: ScalingFamily, gamma: f64) -> Result<Self> {
        Self::new(
            FeatureSpace::Discrete(1),
            MeasureSpec::UniformOnSpace,
            KernelSpec::constant(1.0, 1.0, gamma)?,
            Scaling::Family(family),
        )
    }

    /// Kernels at population size `n`; errors when `w_E⁽ⁿ⁾` leaves [0, 1].
    pub fn kernels_at(&self, n: usize) -> Result<KernelSpec> {
        if n == 0 {
            return Err(invalid("n must be >= 1"));
        }
        let mut k = self.base.clone();
        match &self.scaling {
            Scaling::Fixed => {}
            Scaling::Dense => k.w_i = k.w_i.scaled(1.0 / n as f64),
            Scaling::Family(f) => {
                k.w_i = k.w_i.scaled(f.w_i(n));
                k.w_e = k.w_e.scaled(f.w_e(n));
            }
        }
        k.check_declared().map_err(|e| model(format!("at n = {n}: {e}")))?;
        Ok(k)
    }

    /// Limit transmission kernel `w`, when the scaling defines one.
    pub fn limit_kernel(&self) -> Option<PairFn> {
        match &self.scaling {
            Scaling::Fixed => None,
            Scaling::Dense => Some(self.base.w_e.times(&self.base.w_i)),
            Scaling::Family(f) => Some(self.base.w_e.times(&self.base.w_i).scaled(f.target_w)),
        }
    }
}

/// One row of [`check_assumptions`].
#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionRow {
    pub n: usize,
    /// `sup w_E⁽ⁿ⁾`; rows with `admissible == false` have `w_E > 1`.
    pub w_e_max: f64,
    pub admissible: bool,
    /// Grid estimate of `sup |w⁽ⁿ⁾ − w|`.
    pub sup_w_deviation: f64,
    /// Grid estimate of `sup |γ⁽ⁿ⁾ − γ|`.
    pub sup_gamma_deviation: f64,
    /// Expected `I_n(w_I⁽ⁿ⁾ ∧ 1)` under i.i.d. features.
    pub i_n: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionReport {
    pub rows: Vec<AssumptionRow>,
    /// False when `I_n` does not decrease along the (sorted) `n` list.
    pub i_n_vanishing: bool,
    pub flags: Vec<String>,
}

/// Diagnostics of the convergence assumptions along `n_list`.
///
/// Without a limit kernel (fixed scaling) the deviations are measured
/// against the kernel at the largest `n`.
pub fn check_assumptions(spec: &ModelSpec, n_list: &[usize], quad_nodes: usize) -> Result<AssumptionReport> {
    if n_list.is_empty() {
        return Err(invalid("n_list must not be empty"));
    }
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let quad = Quadrature::for_measure(&spec.space, &spec.measure, quad_nodes)?;
    let grid = test_grid(&spec.space);
    let limit = match spec.limit_kernel() {
        Some(w) => w,
        None => spec.kernels_at(*ns.last().unwrap())?.effective_kernel(*ns.last().unwrap()),
    };
    let mut rows = Vec::with_capacity(ns.len());
    let mut flags = Vec::new();
    for &n in &ns {
        let mut k = spec.base.clone();
        let admissible = match spec.kernels_at(n) {
            Ok(kn) => {
                k = kn;
                true
            }
            Err(_) => {
                // Report the raw scaled kernels even though they are not a model.
                if let Scaling::Family(f) = &spec.scaling {
                    k.w_i = k.w_i.scaled(f.w_i(n));
                    k.w_e = k.w_e.scaled(f.w_e(n));
                }
                flags.push(format!("n = {n}: w_E exceeds 1, the family is not admissible"));
                false
            }
        };
        let wn = k.effective_kernel(n);
        let mut sup_w: f64 = 0.0;
        let mut sup_g: f64 = 0.0;
        for x in &grid {
            for y in &grid {
                sup_w = sup_w.max((wn.eval(x, y) - limit.eval(x, y)).abs());
            }
            sup_g = sup_g.max((k.gamma.eval(x) - spec.base.gamma.eval(x)).abs());
        }
        rows.push(AssumptionRow {
            n,
            w_e_max: k.w_e.bound(),
            admissible,
            sup_w_deviation: sup_w,
            sup_gamma_deviation: sup_g,
            i_n: expected_in(&quad, &k.w_i, n),
        });
    }
    let i_n_vanishing = rows.len() >= 2
        && rows.windows(2).all(|w| w[1].i_n < w[0].i_n)
        && rows.last().unwrap().i_n < rows[0].i_n;
    if !i_n_vanishing {
        flags.push("I_n(w_I ∧ 1) does not decrease with n; the convergence assumption fails".into());
    }
    Ok(AssumptionReport { rows, i_n_vanishing, flags })
}
