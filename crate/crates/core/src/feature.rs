// SPDX-License-Identifier: Apache-2.0

//! Feature spaces, reference measures and sampled populations.

use rand::Rng;
use smallvec::SmallVec;

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Coordinates of a point feature. Inline for dimension up to two.
pub type Point = SmallVec<[f64; 2]>;

/// The static latent attribute of an individual.
#[derive(Clone, Debug, PartialEq)]
pub enum Feature {
    /// Class label, `0..k`.
    Class(usize),
    /// Point in `[0, 1]^d` (or an arbitrary vector for explicit spaces).
    Point(Point),
}

impl Feature {
    pub fn scalar(x: f64) -> Self {
        Feature::Point(smallvec::smallvec![x])
    }

    pub fn point(coords: &[f64]) -> Self {
        Feature::Point(coords.iter().copied().collect())
    }

    pub fn class(&self) -> Option<usize> {
        match self {
            Feature::Class(c) => Some(*c),
            Feature::Point(_) => None,
        }
    }

    pub fn coords(&self) -> Option<&[f64]> {
        match self {
            Feature::Point(p) => Some(p),
            Feature::Class(_) => None,
        }
    }

    /// Euclidean distance between two point features.
    pub fn distance(&self, other: &Feature) -> Option<f64> {
        let (a, b) = (self.coords()?, other.coords()?);
        if a.len() != b.len() {
            return None;
        }
        Some(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
    }
}

/// The space 𝕏 of features.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureSpace {
    Interval01,
    Hypercube(usize),
    Discrete(usize),
    Explicit(Vec<Feature>),
}

impl FeatureSpace {
    pub fn validate(&self) -> Result<()> {
        match self {
            FeatureSpace::Hypercube(0) => Err(invalid("hypercube dimension must be >= 1")),
            FeatureSpace::Discrete(0) => Err(invalid("discrete class count must be >= 1")),
            FeatureSpace::Explicit(points) if points.is_empty() => {
                Err(invalid("explicit feature list is empty"))
            }
            _ => Ok(()),
        }
    }

    /// Number of classes for discrete spaces.
    pub fn classes(&self) -> Option<usize> {
        match self {
            FeatureSpace::Discrete(k) => Some(*k),
            _ => None,
        }
    }

    pub fn contains(&self, x: &Feature) -> bool {
        let in_unit = |p: &[f64]| p.iter().all(|v| (0.0..=1.0).contains(v));
        match (self, x) {
            (FeatureSpace::Interval01, Feature::Point(p)) => p.len() == 1 && in_unit(p),
            (FeatureSpace::Hypercube(d), Feature::Point(p)) => p.len() == *d && in_unit(p),
            (FeatureSpace::Discrete(k), Feature::Class(c)) => c < k,
            (FeatureSpace::Explicit(points), x) => points.contains(x),
            _ => false,
        }
    }

    pub fn check(&self, x: &Feature) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!("{x:?} is not in {}", self.describe())))
        }
    }

    pub fn describe(&self) -> String {
        match self {
            FeatureSpace::Interval01 => "[0,1]".into(),
            FeatureSpace::Hypercube(d) => format!("[0,1]^{d}"),
            FeatureSpace::Discrete(k) => format!("{{0..{k}}}"),
            FeatureSpace::Explicit(p) => format!("explicit({} points)", p.len()),
        }
    }
}

/// Reference measure μ on the feature space.
#[derive(Clone, Debug, PartialEq)]
pub enum MeasureSpec {
    UniformOnSpace,
    DiscreteWeights(Vec<f64>),
    EmpiricalFromFeatures,
}

impl MeasureSpec {
    pub fn validate(&self, space: &FeatureSpace) -> Result<()> {
        match (self, space) {
            (MeasureSpec::DiscreteWeights(w), FeatureSpace::Discrete(k)) => {
                if w.len() != *k {
                    return Err(invalid(format!(
                        "discrete weights have length {} but the space has {k} classes",
                        w.len()
                    )));
                }
                check_probability_vector(w)
            }
            (MeasureSpec::DiscreteWeights(_), _) => {
                Err(invalid("discrete weights require a discrete feature space"))
            }
            (MeasureSpec::EmpiricalFromFeatures, FeatureSpace::Explicit(_)) => Ok(()),
            (MeasureSpec::EmpiricalFromFeatures, _) => {
                Err(invalid("empirical measure requires an explicit feature list"))
            }
            (MeasureSpec::UniformOnSpace, _) => Ok(()),
        }
    }
}

pub(crate) fn check_probability_vector(w: &[f64]) -> Result<()> {
    if w.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(invalid("probability weights must be finite and non-negative"));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("probability weights sum to {total}, not 1")));
    }
    Ok(())
}

/// The features 𝒳⁽ⁿ⁾ = (x₁, …, xₙ) of one population.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub features: Vec<Feature>,
    pub source_seed: u64,
}

impl Population {
    pub fn new(features: Vec<Feature>, source_seed: u64) -> Self {
        Self { features, source_seed }
    }

    /// Population of `n` identical class-0 individuals.
    pub fn homogeneous(n: usize) -> Self {
        Self::new(vec![Feature::Class(0); n], 0)
    }

    pub fn n(&self) -> usize {
        self.features.len()
    }

    /// Per-class counts for discrete features.
    pub fn class_counts(&self, k: usize) -> Vec<usize> {
        let mut counts = vec![0; k];
        for f in &self.features {
            if let Some(c) = f.class() {
                if c < k {
                    counts[c] += 1;
                }
            }
        }
        counts
    }
}

/// Draws `n` i.i.d. features from `mu` on `space`.
pub fn sample_features(
    space: &FeatureSpace,
    mu: &MeasureSpec,
    n: usize,
    seed: u64,
) -> Result<Population> {
    if n == 0 {
        return Err(invalid("population size must be >= 1"));
    }
    space.validate()?;
    mu.validate(space)?;
    let mut rng = rng::stream(seed);
    let features = match (space, mu) {
        (FeatureSpace::Interval01, MeasureSpec::UniformOnSpace) => {
            (0..n).map(|_| Feature::scalar(rng.random::<f64>())).collect()
        }
        (FeatureSpace::Hypercube(d), MeasureSpec::UniformOnSpace) => (0..n)
            .map(|_| Feature::Point((0..*d).map(|_| rng.random::<f64>()).collect()))
            .collect(),
        (FeatureSpace::Discrete(k), MeasureSpec::UniformOnSpace) => {
            (0..n).map(|_| Feature::Class(rng::index(&mut rng, *k))).collect()
        }
        (FeatureSpace::Discrete(_), MeasureSpec::DiscreteWeights(w)) => {
            (0..n).map(|_| Feature::Class(categorical(&mut rng, w))).collect()
        }
        (FeatureSpace::Explicit(points), MeasureSpec::UniformOnSpace) => {
            if points.len() != n {
                return Err(invalid(format!(
                    "explicit space lists {} features but n = {n}; use the empirical measure to resample",
                    points.len()
                )));
            }
            points.clone()
        }
        (FeatureSpace::Explicit(points), MeasureSpec::EmpiricalFromFeatures) => {
            if points.len() == n {
                points.clone()
            } else {
                (0..n)
                    .map(|_| points[rng::index(&mut rng, points.len())].clone())
                    .collect()
            }
        }
        _ => return Err(invalid("feature space and measure do not match")),
    };
    Ok(Population::new(features, seed))
}

fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (c, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = c;
            acc += w;
            if r < acc {
                return c;
            }
        }
    }
    last
}
