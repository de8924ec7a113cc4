// SPDX-License-Identifier: Apache-2.0

//! TOML experiment configuration.

use std::fmt;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

/// Configuration error, with the offending line when it can be located.
#[derive(Debug, Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    FigCvgLeft,
    FigCvgRight,
    FigTplStd,
    FigAlphaSlopes,
    FigSparseLeft,
    FigSparseRight,
    Custom,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::FigCvgLeft => "fig_cvg_left",
            Scenario::FigCvgRight => "fig_cvg_right",
            Scenario::FigTplStd => "fig_tpl_std",
            Scenario::FigAlphaSlopes => "fig_alpha_slopes",
            Scenario::FigSparseLeft => "fig_sparse_left",
            Scenario::FigSparseRight => "fig_sparse_right",
            Scenario::Custom => "custom",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Constant,
    Sbm,
    Geometric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScalingKind {
    #[default]
    Fixed,
    Dense,
    Family,
}

/// Model of a `custom` scenario.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kernel: KernelKind,
    #[serde(default)]
    pub scaling: ScalingKind,
    /// Exponent of the `family` scaling.
    pub alpha: Option<f64>,
    pub w_e: Option<f64>,
    pub w_i: Option<f64>,
    pub gamma: Option<f64>,
    pub w_e_matrix: Option<Vec<Vec<f64>>>,
    pub w_i_matrix: Option<Vec<Vec<f64>>>,
    pub gamma_vec: Option<Vec<f64>>,
    pub class_weights: Option<Vec<f64>>,
    pub radius: Option<f64>,
    pub dimension: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MeanFieldConfig {
    pub dt: Option<f64>,
    pub nodes: Option<usize>,
    pub t_max: Option<f64>,
    pub record_step: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CoupleConfig {
    pub n_list: Option<Vec<usize>>,
    pub runs: Option<usize>,
    pub t_max: Option<f64>,
    pub record_step: Option<f64>,
    pub oracle_seeds: Option<usize>,
}

/// Top-level configuration; unset fields take scenario defaults.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n_list: Option<Vec<usize>>,
    pub alpha: Option<f64>,
    pub alpha_list: Option<Vec<f64>>,
    pub w_i_list: Option<Vec<f64>>,
    pub runs: Option<usize>,
    pub t_max: Option<f64>,
    pub window: Option<[f64; 2]>,
    pub record_step: Option<f64>,
    pub gamma: Option<f64>,
    /// Effective transmission `w = n w_E w_I` of the homogeneous recipes.
    pub target_w: Option<f64>,
    /// Product `n w_E` for the very sparse recipe.
    pub mean_degree: Option<f64>,
    pub u0: Option<f64>,
    /// Record `v` on the giant component.
    pub giant: Option<bool>,
    /// Write one trajectory CSV per run (`simulate` only).
    pub trajectories: Option<bool>,
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub meanfield: MeanFieldConfig,
    #[serde(default)]
    pub couple: CoupleConfig,
    #[serde(skip)]
    pub source: String,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { line: None, message: format!("cannot read {}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_at(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.source = text.to_string();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Error pointing at the line where `key` is assigned.
    pub fn error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { line: line_of(&self.source, key), message: message.into() }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.runs == Some(0) {
            return Err(self.error("runs", "runs must be at least 1"));
        }
        if let Some(ns) = &self.n_list {
            if ns.is_empty() {
                return Err(self.error("n_list", "n_list must not be empty"));
            }
            if ns.contains(&0) {
                return Err(self.error("n_list", "population sizes must be positive"));
            }
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0 && t.is_finite()) {
                return Err(self.error("t_max", "t_max must be positive"));
            }
        }
        let t_max = self.t_max.unwrap_or(80.0);
        if let Some([a, b]) = self.window {
            if !(0.0 <= a && a < b && b <= t_max) {
                return Err(self.error("window", format!("window [{a}, {b}] must lie inside [0, {t_max}]")));
            }
        }
        if let Some(h) = self.record_step {
            if !(h > 0.0) {
                return Err(self.error("record_step", "record_step must be positive"));
            }
        }
        if let Some(u) = self.u0 {
            if !(0.0..=1.0).contains(&u) {
                return Err(self.error("u0", "u0 must lie in [0, 1]"));
            }
        }
        if let Some(g) = self.gamma {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(self.error("gamma", "gamma must be finite and non-negative"));
            }
        }
        for (key, list) in [("alpha_list", &self.alpha_list), ("w_i_list", &self.w_i_list)] {
            if let Some(l) = list {
                if l.is_empty() || l.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(self.error(key, format!("{key} must be a non-empty list of non-negative numbers")));
                }
            }
        }
        if self.scenario == Scenario::Custom && self.model.is_none() {
            return Err(self.error("scenario", "the custom scenario needs a [model] table"));
        }
        if let Some(dt) = self.meanfield.dt {
            if !(dt > 0.0) {
                return Err(self.error("dt", "dt must be positive"));
            }
        }
        if self.meanfield.nodes == Some(0) {
            return Err(self.error("nodes", "nodes must be positive"));
        }
        if self.couple.runs == Some(0) {
            return Err(self.error("runs", "couple.runs must be at least 1"));
        }
        Ok(())
    }

    pub fn t_max(&self) -> f64 {
        self.t_max.unwrap_or(80.0)
    }

    pub fn window(&self) -> (f64, f64) {
        let [a, b] = self.window.unwrap_or([20.0, 80.0]);
        (a, b)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(0.7)
    }

    pub fn target_w(&self) -> f64 {
        self.target_w.unwrap_or(3.0)
    }

    pub fn u0(&self) -> f64 {
        self.u0.unwrap_or(1.0)
    }

    pub fn record_step(&self) -> f64 {
        self.record_step.unwrap_or(0.5)
    }
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line of the first assignment to `key`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_defaults() {
        let c = ExperimentConfig::parse("scenario = \"fig_cvg_left\"\n").unwrap();
        assert_eq!(c.scenario, Scenario::FigCvgLeft);
        assert_eq!(c.t_max(), 80.0);
        assert_eq!(c.window(), (20.0, 80.0));
    }

    #[test]
    fn semantic_errors_name_the_line() {
        let e = ExperimentConfig::parse("scenario = \"fig_tpl_std\"\n\nruns = 0\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.to_string().starts_with("config line 3:"));
        let e = ExperimentConfig::parse("scenario = \"custom\"\nt_max = 10\nwindow = [5, 20]\n").unwrap_err();
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn syntax_errors_name_the_line() {
        let e = ExperimentConfig::parse("scenario = \"fig_tpl_std\"\nruns = \"ten\"\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = ExperimentConfig::parse("scenario = \"fig_tpl_std\"\nbogus = 1\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = ExperimentConfig::parse("scenario = \"nope\"\n").unwrap_err();
        assert_eq!(e.line, Some(1));
    }

    #[test]
    fn custom_needs_model() {
        assert!(ExperimentConfig::parse("scenario = \"custom\"\n").is_err());
        let ok = "scenario = \"custom\"\n[model]\nkernel = \"constant\"\nw_e = 0.1\nw_i = 0.5\ngamma = 0.7\n";
        assert!(ExperimentConfig::parse(ok).is_ok());
    }
}
