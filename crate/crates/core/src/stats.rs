// SPDX-License-Identifier: Apache-2.0

//! Temporal averages of trajectories and log-log regressions.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Result};
use crate::sis::Trajectory;

/// Exact integrals of a step function over a fixed window.
///
/// Values are accumulated relative to the first value seen so that the
/// variance does not suffer from cancellation when fluctuations are small.
#[derive(Clone, Debug, PartialEq)]
pub struct StepIntegrator {
    start: f64,
    end: f64,
    shift: Option<f64>,
    first: f64,
    second: f64,
}

impl StepIntegrator {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end, shift: None, first: 0.0, second: 0.0 }
    }

    pub fn window(&self) -> (f64, f64) {
        (self.start, self.end)
    }

    /// Adds the contribution of `value` held on `[t0, t1)`.
    #[inline]
    pub fn add(&mut self, t0: f64, t1: f64, value: f64) {
        let lo = t0.max(self.start);
        let hi = t1.min(self.end);
        if hi > lo {
            let shift = *self.shift.get_or_insert(value);
            let d = value - shift;
            self.first += d * (hi - lo);
            self.second += d * d * (hi - lo);
        }
    }

    /// `(mean, standard deviation)` over the window.
    pub fn mean_sd(&self) -> (f64, f64) {
        let len = self.end - self.start;
        let shift = self.shift.unwrap_or(0.0);
        let m1 = self.first / len;
        let var = (self.second / len - m1 * m1).max(0.0);
        (shift + m1, var.sqrt())
    }
}

/// Temporal mean and standard deviation of `u` (and of the masked `v`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TemporalSummary {
    pub window: (f64, f64),
    pub u_hat: f64,
    pub sigma_hat: f64,
    pub v_hat: Option<f64>,
    pub sigma_v: Option<f64>,
}

/// `û* = |I₀|⁻¹ ∫ u dt` and `σ̂² = |I₀|⁻¹ ∫ (u − û*)² dt` over `window`.
///
/// Uses the retained event log when present, then the online integrals the
/// run accumulated for the same window, and finally the trapezoid rule on
/// the recording grid (first-order accurate in the grid step).
pub fn temporal_summary(traj: &Trajectory, window: (f64, f64)) -> Result<TemporalSummary> {
    let (a, b) = window;
    if !(b > a) {
        return Err(invalid(format!("empty window [{a}, {b}]")));
    }
    if a < 0.0 || b > traj.t_max {
        return Err(invalid(format!("window [{a}, {b}] is not inside [0, {}]", traj.t_max)));
    }
    if traj.events.is_some() {
        let (u, v) = traj.integrate_events(a, b);
        return Ok(summary_from(window, &u, v.as_ref()));
    }
    if let Some(w) = traj.windows.iter().find(|w| w.u.window() == window) {
        return Ok(summary_from(window, &w.u, w.v.as_ref()));
    }
    let u = trapezoid(&traj.grid, &traj.u, a, b)?;
    let v = match &traj.v {
        Some(v) => Some(trapezoid(&traj.grid, v, a, b)?),
        None => None,
    };
    Ok(TemporalSummary {
        window,
        u_hat: u.0,
        sigma_hat: u.1,
        v_hat: v.map(|x| x.0),
        sigma_v: v.map(|x| x.1),
    })
}

fn summary_from(window: (f64, f64), u: &StepIntegrator, v: Option<&StepIntegrator>) -> TemporalSummary {
    let (u_hat, sigma_hat) = u.mean_sd();
    let vs = v.map(StepIntegrator::mean_sd);
    TemporalSummary { window, u_hat, sigma_hat, v_hat: vs.map(|x| x.0), sigma_v: vs.map(|x| x.1) }
}

fn trapezoid(grid: &[f64], values: &[f64], a: f64, b: f64) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= a && **t <= b)
        .map(|(t, v)| (*t, *v))
        .collect();
    if pts.len() < 2 {
        return Err(invalid("recording grid has fewer than two points in the window"));
    }
    let span = pts.last().unwrap().0 - pts[0].0;
    let integrate = |f: &dyn Fn(f64) -> f64| {
        pts.windows(2).map(|w| 0.5 * (f(w[0].1) + f(w[1].1)) * (w[1].0 - w[0].0)).sum::<f64>() / span
    };
    let mean = integrate(&|x| x);
    let var = integrate(&|x| (x - mean) * (x - mean));
    Ok((mean, var.max(0.0).sqrt()))
}

/// Ordinary least squares of `ln value` on `ln n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared_fit: f64,
    /// Imposed slope, when one was requested.
    pub fixed_slope: Option<f64>,
    /// Refitted intercept under the imposed slope.
    pub fixed_intercept: Option<f64>,
    /// `1 − SS_res / SS_tot` of the imposed-slope line.
    pub r_squared_fixed: Option<f64>,
    pub points: usize,
}

pub fn loglog_regression(points: &[(f64, f64)], fixed_slope: Option<f64>) -> Result<RegressionResult> {
    if points.len() < 2 {
        return Err(invalid("log-log regression needs at least two points"));
    }
    if points.iter().any(|&(n, v)| !(n > 0.0 && v > 0.0) || !n.is_finite() || !v.is_finite()) {
        return Err(invalid("log-log regression needs positive finite coordinates"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(invalid("log-log regression needs at least two distinct abscissae"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = |s: f64, b: f64| {
        let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - s * x - b).powi(2)).sum();
        if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else if ss_res == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    };
    let (fixed_intercept, r_squared_fixed) = match fixed_slope {
        Some(s) => {
            let b = my - s * mx;
            (Some(b), Some(r2(s, b)))
        }
        None => (None, None),
    };
    Ok(RegressionResult {
        slope,
        intercept,
        r_squared_fit: r2(slope, intercept),
        fixed_slope,
        fixed_intercept,
        r_squared_fixed,
        points: points.len(),
    })
}

/// Log-log fit of temporal standard deviations against `n`, compared with
/// the `n^(−1/2)` law.
pub fn fluctuation_scaling(points: &[(f64, f64)]) -> Result<RegressionResult> {
    loglog_regression(points, Some(-0.5))
}

/// Result of a chi-square test.
#[derive(Clone, Debug, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Two-sample chi-square homogeneity test on histograms over the same bins.
///
/// Adjacent bins are merged until every pooled bin expects at least five
/// observations in each sample.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<ChiSquare> {
    if a.len() != b.len() {
        return Err(invalid("histograms must share their bins"));
    }
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    if na == 0.0 || nb == 0.0 {
        return Err(invalid("both samples must be non-empty"));
    }
    let min_share = 5.0 / na.min(nb);
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut cur = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        cur.0 += x as f64;
        cur.1 += y as f64;
        if (cur.0 + cur.1) / (na + nb) >= min_share {
            pooled.push(cur);
            cur = (0.0, 0.0);
        }
    }
    if cur.0 + cur.1 > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += cur.0;
                last.1 += cur.1;
            }
            None => pooled.push(cur),
        }
    }
    if pooled.len() < 2 {
        return Ok(ChiSquare { statistic: 0.0, dof: 0, p_value: 1.0 });
    }
    let total = na + nb;
    let mut stat = 0.0;
    for &(x, y) in &pooled {
        let col = x + y;
        let (ea, eb) = (col * na / total, col * nb / total);
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let dof = pooled.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| invalid(e.to_string()))?;
    Ok(ChiSquare { statistic: stat, dof, p_value: 1.0 - dist.cdf(stat) })
}

/// Chi-square goodness of fit of observed counts to probabilities.
pub fn chi_square_fit(observed: &[u64], probs: &[f64]) -> Result<ChiSquare> {
    if observed.len() != probs.len() {
        return Err(invalid("observed counts and probabilities must align"));
    }
    let total = observed.iter().sum::<u64>() as f64;
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut cur = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        cur.0 += o as f64;
        cur.1 += p * total;
        if cur.1 >= 5.0 {
            pooled.push(cur);
            cur = (0.0, 0.0);
        }
    }
    if let Some(last) = pooled.last_mut() {
        last.0 += cur.0;
        last.1 += cur.1;
    }
    if pooled.len() < 2 {
        return Ok(ChiSquare { statistic: 0.0, dof: 0, p_value: 1.0 });
    }
    let stat: f64 = pooled.iter().map(|&(o, e)| (o - e).powi(2) / e).sum();
    let dof = pooled.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| invalid(e.to_string()))?;
    Ok(ChiSquare { statistic: stat, dof, p_value: 1.0 - dist.cdf(stat) })
}

/// Mean and standard error of a sample.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}
