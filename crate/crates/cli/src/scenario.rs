// SPDX-License-Identifier: Apache-2.0

//! Scenario recipes: each expands a configuration into sweep points.

use sisnet_core::meanfield::solve_general_with;
use sisnet_core::{
    equilibrium, FeatureSpace, KernelSpec, MeasureSpec, ModelSpec, PairFn, PointFn, Quadrature, Scaling,
    ScalingFamily, Stepping,
};

use crate::config::{ConfigError, ExperimentConfig, KernelKind, ModelConfig, Scenario, ScalingKind};

/// How the kernels of a point depend on `n`.
#[derive(Clone, Debug)]
pub enum Recipe {
    /// Homogeneous scaling family `w_I = base (n/n0)^(−α)`, `n w_E w_I = w`.
    Family(ScalingFamily),
    /// Fixed `w_I`, with `w_E = w / (n w_I)`.
    FixedRate { w_i: f64, target_w: f64 },
    /// Fixed `w_I`, with mean degree `n w_E` held constant.
    FixedDegree { w_i: f64, mean_degree: f64 },
    /// Fixed `w_I` and fixed product `w_E w_I`.
    FixedProduct { w_i: f64, product: f64 },
    Custom(ModelSpec),
}

impl Recipe {
    pub fn kernels_at(&self, n: usize, gamma: f64) -> sisnet_core::Result<KernelSpec> {
        let nf = n as f64;
        match self {
            Recipe::Family(f) => f.homogeneous(n, gamma),
            Recipe::FixedRate { w_i, target_w } => KernelSpec::constant(target_w / (nf * w_i), *w_i, gamma),
            Recipe::FixedDegree { w_i, mean_degree } => KernelSpec::constant(mean_degree / nf, *w_i, gamma),
            Recipe::FixedProduct { w_i, product } => KernelSpec::constant(product / w_i, *w_i, gamma),
            Recipe::Custom(m) => m.kernels_at(n),
        }
    }

    /// Feature space and measure; homogeneous recipes use a single class.
    pub fn space(&self) -> (FeatureSpace, MeasureSpec) {
        match self {
            Recipe::Custom(m) => (m.space.clone(), m.measure.clone()),
            _ => (FeatureSpace::Discrete(1), MeasureSpec::UniformOnSpace),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        !matches!(self, Recipe::Custom(_))
    }
}

/// One `(n, kernel)` combination with its replicates.
#[derive(Clone, Debug)]
pub struct Point {
    pub index: usize,
    pub n: usize,
    pub alpha: Option<f64>,
    pub recipe: Recipe,
    pub kernels: KernelSpec,
    /// Reference equilibrium used for `|û* − u*|`.
    pub u_star: f64,
    /// Value folded into the run seeds to separate points of equal `n`.
    pub key: u64,
    /// File-name stem.
    pub tag: String,
}

impl Point {
    pub fn w_i(&self) -> f64 {
        self.kernels.w_i_bound()
    }

    pub fn w_e(&self) -> f64 {
        self.kernels.w_e.bound()
    }
}

/// Expanded experiment.
#[derive(Clone, Debug)]
pub struct Plan {
    pub scenario: Scenario,
    pub points: Vec<Point>,
    pub runs: usize,
    pub t_max: f64,
    pub window: (f64, f64),
    pub record_step: f64,
    pub gamma: f64,
    pub u0: f64,
    pub giant: bool,
}

pub const DEFAULT_CVG_WI: [f64; 4] = [0.1, 0.5, 1.0, 2.0];
pub const DEFAULT_SPARSE_WI: [f64; 7] = [0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
pub const DEFAULT_SLOPE_ALPHAS: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];

fn fmt_key(x: f64) -> String {
    format!("{x}").replace('.', "p")
}

impl Plan {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, ConfigError> {
        let gamma = cfg.gamma();
        let w = cfg.target_w();
        let family = |alpha: f64| ScalingFamily { target_w: w, ..ScalingFamily::standard(alpha) };
        let n0 = family(0.0).n0;
        let ns = |default: &[usize]| cfg.n_list.clone().unwrap_or_else(|| default.to_vec());
        let alphas = |default: &[f64]| {
            cfg.alpha_list.clone().or(cfg.alpha.map(|a| vec![a])).unwrap_or_else(|| default.to_vec())
        };
        let w_is = |default: &[f64]| cfg.w_i_list.clone().unwrap_or_else(|| default.to_vec());
        let u_homog = equilibrium(w, gamma).map_err(|e| cfg.error("target_w", e.to_string()))?.1;

        // (n, alpha, recipe, key) per point.
        let mut specs: Vec<(usize, Option<f64>, Recipe, f64)> = Vec::new();
        let (runs, giant) = match cfg.scenario {
            Scenario::FigCvgLeft => {
                for n in ns(&[n0]) {
                    for w_i in w_is(&DEFAULT_CVG_WI) {
                        specs.push((n, None, Recipe::FixedRate { w_i, target_w: w }, w_i));
                    }
                }
                (1, false)
            }
            Scenario::FigCvgRight => {
                for a in alphas(&[0.3]) {
                    for n in ns(&[2_000, 10_000, 100_000]) {
                        specs.push((n, Some(a), Recipe::Family(family(a)), a));
                    }
                }
                (1, false)
            }
            Scenario::FigTplStd => {
                for a in alphas(&[0.3, 0.0]) {
                    for n in ns(&[2_000, 4_000, 8_000, 16_000, 32_000]) {
                        specs.push((n, Some(a), Recipe::Family(family(a)), a));
                    }
                }
                (10, false)
            }
            Scenario::FigAlphaSlopes => {
                for a in alphas(&DEFAULT_SLOPE_ALPHAS) {
                    for n in ns(&[2_000, 6_000, 20_000, 60_000]) {
                        specs.push((n, Some(a), Recipe::Family(family(a)), a));
                    }
                }
                (25, false)
            }
            Scenario::FigSparseLeft => {
                let w_i = cfg.w_i_list.as_ref().and_then(|l| l.first().copied()).unwrap_or(1.2);
                let mean_degree = cfg.mean_degree.unwrap_or(w / w_i);
                for n in ns(&[1_000, 2_000, 4_000, 8_000, 16_000, 32_000]) {
                    specs.push((n, None, Recipe::FixedDegree { w_i, mean_degree }, w_i));
                }
                (10, true)
            }
            Scenario::FigSparseRight => {
                for n in ns(&[n0]) {
                    for w_i in w_is(&DEFAULT_SPARSE_WI) {
                        specs.push((n, None, Recipe::FixedProduct { w_i, product: w / n0 as f64 }, w_i));
                    }
                }
                (10, true)
            }
            Scenario::Custom => {
                let model = cfg.model.as_ref().expect("validated");
                let spec = build_model(cfg, model)?;
                for n in ns(&[n0]) {
                    specs.push((n, model.alpha, Recipe::Custom(spec.clone()), 0.0));
                }
                (1, false)
            }
        };

        let mut points = Vec::with_capacity(specs.len());
        for (index, (n, alpha, recipe, key)) in specs.into_iter().enumerate() {
            let kernels = recipe
                .kernels_at(n, gamma)
                .map_err(|e| cfg.error(key_field(cfg.scenario), format!("point n = {n}: {e}")))?;
            let u_star = match &recipe {
                Recipe::Custom(m) => custom_u_star(cfg, m, &kernels, n)?,
                _ => u_homog,
            };
            let tag = match cfg.scenario {
                Scenario::FigCvgLeft | Scenario::FigSparseRight => format!("n{n}_wi{}", fmt_key(key)),
                Scenario::Custom => format!("n{n}"),
                _ => match alpha {
                    Some(a) => format!("n{n}_alpha{}", fmt_key(a)),
                    None => format!("n{n}"),
                },
            };
            points.push(Point { index, n, alpha, recipe, kernels, u_star, key: key.to_bits(), tag });
        }
        Ok(Plan {
            scenario: cfg.scenario,
            points,
            runs: cfg.runs.unwrap_or(runs),
            t_max: cfg.t_max(),
            window: cfg.window(),
            record_step: cfg.record_step(),
            gamma,
            u0: cfg.u0(),
            giant: cfg.giant.unwrap_or(giant),
        })
    }
}

fn key_field(s: Scenario) -> &'static str {
    match s {
        Scenario::Custom => "kernel",
        Scenario::FigCvgLeft | Scenario::FigSparseRight => "w_i_list",
        _ => "n_list",
    }
}

fn require<T: Clone>(cfg: &ExperimentConfig, v: &Option<T>, key: &str) -> Result<T, ConfigError> {
    v.clone().ok_or_else(|| cfg.error("kernel", format!("this kernel needs `{key}`")))
}

/// Builds the model of a `custom` scenario.
pub fn build_model(cfg: &ExperimentConfig, m: &ModelConfig) -> Result<ModelSpec, ConfigError> {
    let gamma = m.gamma.unwrap_or(cfg.gamma());
    let (space, measure, base) = match m.kernel {
        KernelKind::Constant => {
            let k = KernelSpec::constant(require(cfg, &m.w_e, "w_e")?, require(cfg, &m.w_i, "w_i")?, gamma);
            (FeatureSpace::Discrete(1), MeasureSpec::UniformOnSpace, k)
        }
        KernelKind::Sbm => {
            let we = require(cfg, &m.w_e_matrix, "w_e_matrix")?;
            let wi = require(cfg, &m.w_i_matrix, "w_i_matrix")?;
            let k = we.len();
            let g = m.gamma_vec.clone().unwrap_or_else(|| vec![gamma; k]);
            let measure = match &m.class_weights {
                Some(w) => MeasureSpec::DiscreteWeights(w.clone()),
                None => MeasureSpec::UniformOnSpace,
            };
            (FeatureSpace::Discrete(k), measure, KernelSpec::sbm(&we, &wi, &g))
        }
        KernelKind::Geometric => {
            let d = m.dimension.unwrap_or(1);
            let k = KernelSpec::geometric(require(cfg, &m.radius, "radius")?, require(cfg, &m.w_i, "w_i")?, gamma);
            (FeatureSpace::Hypercube(d), MeasureSpec::UniformOnSpace, k)
        }
    };
    let base = base.map_err(|e| cfg.error("kernel", e.to_string()))?;
    let scaling = match m.scaling {
        ScalingKind::Fixed => Scaling::Fixed,
        ScalingKind::Dense => Scaling::Dense,
        ScalingKind::Family => Scaling::Family(ScalingFamily {
            target_w: cfg.target_w(),
            ..ScalingFamily::standard(m.alpha.ok_or_else(|| cfg.error("scaling", "family scaling needs `alpha`"))?)
        }),
    };
    ModelSpec::new(space, measure, base, scaling).map_err(|e| cfg.error("kernel", e.to_string()))
}

/// Transmission kernel driving the deterministic equation of a custom
/// model: the limit kernel when the scaling defines one, else `n w_E w_I`.
pub fn custom_transmission(m: &ModelSpec, kernels: &KernelSpec, n: usize) -> PairFn {
    m.limit_kernel().unwrap_or_else(|| kernels.effective_kernel(n))
}

fn custom_u_star(cfg: &ExperimentConfig, m: &ModelSpec, kernels: &KernelSpec, n: usize) -> Result<f64, ConfigError> {
    let w = custom_transmission(m, kernels, n);
    if let (Some(w), Some(g)) = (w.as_constant(), kernels.gamma.as_constant()) {
        return equilibrium(w, g).map(|e| e.1).map_err(|e| cfg.error("kernel", e.to_string()));
    }
    // Non-constant kernels: long-time value of the deterministic equation.
    let nodes = cfg.meanfield.nodes.unwrap_or(32);
    let quad = Quadrature::for_measure(&m.space, &m.measure, nodes).map_err(|e| cfg.error("kernel", e.to_string()))?;
    let horizon = cfg.meanfield.t_max.unwrap_or(cfg.t_max()).max(200.0);
    let st = Stepping::new(horizon, cfg.meanfield.dt.unwrap_or(1e-2)).with_stride(usize::MAX);
    let sol = solve_general_with(&w, &kernels.gamma, &quad, &PointFn::Constant(1.0), st)
        .map_err(|e| cfg.error("kernel", e.to_string()))?;
    Ok(sol.aggregate(sol.times.len() - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(text: &str) -> Plan {
        Plan::from_config(&ExperimentConfig::parse(text).unwrap()).unwrap()
    }

    #[test]
    fn cvg_left_holds_w_fixed() {
        let p = plan("scenario = \"fig_cvg_left\"\n");
        assert_eq!(p.points.len(), 4);
        for pt in &p.points {
            let w = pt.n as f64 * pt.w_e() * pt.w_i();
            assert!((w - 3.0).abs() < 1e-12);
            assert!((pt.u_star - (1.0 - 0.7 / 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_recipes() {
        let p = plan("scenario = \"fig_sparse_left\"\nn_list = [8000]\n");
        let pt = &p.points[0];
        assert!((pt.n as f64 * pt.w_e() - 2.5).abs() < 1e-12);
        assert_eq!(pt.w_i(), 1.2);
        assert!(p.giant);
        let p = plan("scenario = \"fig_sparse_right\"\n");
        assert_eq!(p.points.last().unwrap().w_i(), 3.0);
        for pt in &p.points {
            assert!((pt.w_e() * pt.w_i() - 3.0 / 2000.0).abs() < 1e-15);
        }
    }

    #[test]
    fn keys_and_tags_are_distinct() {
        let p = plan("scenario = \"fig_alpha_slopes\"\n");
        assert_eq!(p.points.len(), 24);
        let mut seen: Vec<_> = p.points.iter().map(|pt| (pt.n, pt.key)).collect();
        seen.dedup();
        assert_eq!(seen.len(), 24);
        let mut tags: Vec<_> = p.points.iter().map(|pt| pt.tag.clone()).collect();
        tags.sort();
        tags.dedup();
        assert_eq!(tags.len(), 24);
    }

    #[test]
    fn inadmissible_point_reports_line() {
        let cfg = ExperimentConfig::parse("scenario = \"fig_cvg_left\"\nn_list = [10]\nw_i_list = [0.1]\n").unwrap();
        let e = Plan::from_config(&cfg).unwrap_err();
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn custom_geometric_u_star_from_equation() {
        let text = "scenario = \"custom\"\nn_list = [500]\n[model]\nkernel = \"geometric\"\nradius = 0.2\nw_i = 0.05\nscaling = \"fixed\"\n";
        let p = plan(text);
        let u = p.points[0].u_star;
        assert!(u > 0.0 && u < 1.0, "{u}");
    }
}
