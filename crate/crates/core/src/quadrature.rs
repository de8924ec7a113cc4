// SPDX-License-Identifier: Apache-2.0

//! Discretizations of the reference measure μ.

use crate::error::{invalid, Result};
use crate::feature::{check_probability_vector, Feature, FeatureSpace, MeasureSpec};

/// Nodes and non-negative weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadrature {
    nodes: Vec<Feature>,
    weights: Vec<f64>,
}

impl Quadrature {
    pub fn new(nodes: Vec<Feature>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(invalid("quadrature needs as many weights as nodes (at least one)"));
        }
        check_probability_vector(&weights)?;
        Ok(Self { nodes, weights })
    }

    /// Single node carrying all the mass.
    pub fn point_mass(node: Feature) -> Self {
        Self { nodes: vec![node], weights: vec![1.0] }
    }

    /// Default discretization of `measure` on `space`.
    ///
    /// Continuous spaces use `m` equal-weight midpoints per axis (tensorized,
    /// dimension at most 2); discrete and explicit spaces are represented
    /// exactly.
    pub fn for_measure(space: &FeatureSpace, measure: &MeasureSpec, m: usize) -> Result<Self> {
        space.validate()?;
        measure.validate(space)?;
        if m == 0 {
            return Err(invalid("quadrature needs at least one node per axis"));
        }
        match (space, measure) {
            (FeatureSpace::Interval01, _) => Ok(Self::midpoint_1d(m)),
            (FeatureSpace::Hypercube(1), _) => Ok(Self::midpoint_1d(m)),
            (FeatureSpace::Hypercube(2), _) => {
                let h = 1.0 / m as f64;
                let mut nodes = Vec::with_capacity(m * m);
                for a in 0..m {
                    for b in 0..m {
                        nodes.push(Feature::point(&[(a as f64 + 0.5) * h, (b as f64 + 0.5) * h]));
                    }
                }
                let w = 1.0 / (m * m) as f64;
                Ok(Self { weights: vec![w; nodes.len()], nodes })
            }
            (FeatureSpace::Hypercube(d), _) => Err(invalid(format!(
                "tensor quadrature is limited to dimension 2, got {d}"
            ))),
            (FeatureSpace::Discrete(k), MeasureSpec::DiscreteWeights(w)) => {
                Self::new((0..*k).map(Feature::Class).collect(), w.clone())
            }
            (FeatureSpace::Discrete(k), _) => Ok(Self {
                nodes: (0..*k).map(Feature::Class).collect(),
                weights: vec![1.0 / *k as f64; *k],
            }),
            (FeatureSpace::Explicit(points), _) => Ok(Self {
                nodes: points.clone(),
                weights: vec![1.0 / points.len() as f64; points.len()],
            }),
        }
    }

    fn midpoint_1d(m: usize) -> Self {
        let h = 1.0 / m as f64;
        Self {
            nodes: (0..m).map(|a| Feature::scalar((a as f64 + 0.5) * h)).collect(),
            weights: vec![h; m],
        }
    }

    pub fn nodes(&self) -> &[Feature] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// ∫∫ g(x, y) μ(dx) μ(dy).
    pub fn integrate_pairs(&self, g: impl Fn(&Feature, &Feature) -> f64) -> f64 {
        let mut total = 0.0;
        for (x, wx) in self.nodes.iter().zip(&self.weights) {
            let mut row = 0.0;
            for (y, wy) in self.nodes.iter().zip(&self.weights) {
                row += g(x, y) * wy;
            }
            total += row * wx;
        }
        total
    }

    /// ∫ g(x, x) μ(dx).
    pub fn integrate_diagonal(&self, g: impl Fn(&Feature, &Feature) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| g(x, x) * w).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_weights_sum_to_one() {
        let q = Quadrature::for_measure(&FeatureSpace::Interval01, &MeasureSpec::UniformOnSpace, 256)
            .unwrap();
        assert_eq!(q.len(), 256);
        assert!((q.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let q2 = Quadrature::for_measure(&FeatureSpace::Hypercube(2), &MeasureSpec::UniformOnSpace, 8)
            .unwrap();
        assert_eq!(q2.len(), 64);
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(Quadrature::new(vec![Feature::Class(0)], vec![0.5]).is_err());
        assert!(Quadrature::new(vec![Feature::Class(0), Feature::Class(1)], vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn midpoint_integrates_linear_exactly() {
        let q = Quadrature::for_measure(&FeatureSpace::Interval01, &MeasureSpec::UniformOnSpace, 10)
            .unwrap();
        let v = q.integrate_pairs(|x, y| x.coords().unwrap()[0] + y.coords().unwrap()[0]);
        assert!((v - 1.0).abs() < 1e-14);
    }
}
