// SPDX-License-Identifier: Apache-2.0

//! Deterministic limit dynamics: the integro-differential equation on a
//! quadrature, the block-model ODE system and the homogeneous logistic law.

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::feature::Feature;
use crate::kernel::{PairFn, PointFn};
use crate::quadrature::Quadrature;

/// Intermediate RK4 values may leave `[0, 1]` by at most this much.
pub const STAGE_TOLERANCE: f64 = 1e-6;

/// Node values `u(t_r, x_k)` on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldSolution {
    pub times: Vec<f64>,
    /// Row-major: row `r` holds the `m` node values at `times[r]`.
    values: Vec<f64>,
    pub nodes: Vec<Feature>,
    pub weights: Vec<f64>,
    pub method: &'static str,
    pub dt: f64,
}

impl MeanFieldSolution {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let m = self.nodes.len();
        &self.values[r * m..(r + 1) * m]
    }

    pub fn last(&self) -> &[f64] {
        self.row(self.times.len() - 1)
    }

    pub fn node_series(&self, k: usize) -> Vec<f64> {
        (0..self.times.len()).map(|r| self.row(r)[k]).collect()
    }

    /// `∫ u(t_r, x) μ(dx)`, the limiting infected proportion.
    pub fn aggregate(&self, r: usize) -> f64 {
        self.row(r).iter().zip(&self.weights).map(|(u, w)| u * w).sum()
    }

    /// Writes `t,u_0,…,u_{m−1}` preceded by comment lines with the node
    /// coordinates and weights.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let nodes: Vec<String> = self.nodes.iter().map(feature_label).collect();
        let weights: Vec<String> = self.weights.iter().map(|w| w.to_string()).collect();
        writeln!(out, "# nodes: {}", nodes.join(" "))?;
        writeln!(out, "# weights: {}", weights.join(" "))?;
        let cols: Vec<String> = (0..self.nodes.len()).map(|k| format!("u_{k}")).collect();
        writeln!(out, "t,{}", cols.join(","))?;
        for (r, t) in self.times.iter().enumerate() {
            let row: Vec<String> = self.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{t},{}", row.join(","))?;
        }
        Ok(())
    }
}

fn feature_label(x: &Feature) -> String {
    match x {
        Feature::Class(c) => format!("class{c}"),
        Feature::Point(p) => p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(":"),
    }
}

/// Time stepping of a fixed-step RK4 solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stepping {
    pub t_max: f64,
    pub dt: f64,
    /// Keep every `stride`-th step (the final time is always kept).
    pub stride: usize,
}

impl Stepping {
    pub fn new(t_max: f64, dt: f64) -> Self {
        Self { t_max, dt, stride: 1 }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("step size must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(invalid(format!("horizon must be finite and non-negative, got {}", self.t_max)));
        }
        if self.stride == 0 {
            return Err(invalid("output stride must be positive"));
        }
        Ok(())
    }
}

/// Solves `∂ₜu(x) = (1 − u(x)) ∫ w(x, y) u(y) μ(dy) − γ(x) u(x)` on the
/// quadrature nodes with classical RK4, keeping every step.
pub fn solve_general(
    w: &PairFn,
    gamma: &PointFn,
    quad: &Quadrature,
    u0: &PointFn,
    t_max: f64,
    dt: f64,
) -> Result<MeanFieldSolution> {
    solve_general_with(w, gamma, quad, u0, Stepping::new(t_max, dt))
}

pub fn solve_general_with(
    w: &PairFn,
    gamma: &PointFn,
    quad: &Quadrature,
    u0: &PointFn,
    stepping: Stepping,
) -> Result<MeanFieldSolution> {
    stepping.validate()?;
    let nodes = quad.nodes();
    let weights = quad.weights();
    let m = nodes.len();
    let mut matrix = vec![0.0; m * m];
    for (k, x) in nodes.iter().enumerate() {
        for (l, y) in nodes.iter().enumerate() {
            matrix[k * m + l] = w.eval(x, y) * weights[l];
        }
    }
    let g: Vec<f64> = nodes.iter().map(|x| gamma.eval(x)).collect();
    if g.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(invalid("recovery rates must be finite and non-negative"));
    }
    let init: Vec<f64> = nodes.iter().map(|x| u0.eval(x)).collect();
    if let Some(bad) = init.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(invalid(format!("initial value {bad} is outside [0, 1]")));
    }
    let (times, values) = integrate(&matrix, &g, init, stepping)?;
    Ok(MeanFieldSolution {
        times,
        values,
        nodes: nodes.to_vec(),
        weights: weights.to_vec(),
        method: "rk4",
        dt: stepping.dt,
    })
}

fn rhs(matrix: &[f64], g: &[f64], u: &[f64], out: &mut [f64]) {
    let m = u.len();
    for k in 0..m {
        let row = &matrix[k * m..(k + 1) * m];
        let force: f64 = row.iter().zip(u).map(|(a, b)| a * b).sum();
        out[k] = (1.0 - u[k]) * force - g[k] * u[k];
    }
}

fn check_stage(t: f64, u: &[f64]) -> Result<()> {
    match u.iter().find(|v| !(**v >= -STAGE_TOLERANCE && **v <= 1.0 + STAGE_TOLERANCE)) {
        Some(&value) => Err(Error::StepRejected { t, value }),
        None => Ok(()),
    }
}

fn integrate(matrix: &[f64], g: &[f64], mut u: Vec<f64>, s: Stepping) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = u.len();
    let full = (s.t_max / s.dt * (1.0 + 1e-12)).floor() as usize;
    let rest = s.t_max - full as f64 * s.dt;
    let steps = if rest > 1e-12 * s.t_max.max(1.0) { full + 1 } else { full };
    let mut times = vec![0.0];
    let mut values = Vec::with_capacity((steps / s.stride + 2) * m);
    values.extend(u.iter().map(|v| v.clamp(0.0, 1.0)));
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut tmp = vec![0.0; m];
    for step in 0..steps {
        let t = step as f64 * s.dt;
        let h = if step == full { s.t_max - t } else { s.dt };
        rhs(matrix, g, &u, &mut k1);
        for k in 0..m {
            tmp[k] = u[k] + 0.5 * h * k1[k];
        }
        check_stage(t, &tmp)?;
        rhs(matrix, g, &tmp, &mut k2);
        for k in 0..m {
            tmp[k] = u[k] + 0.5 * h * k2[k];
        }
        check_stage(t, &tmp)?;
        rhs(matrix, g, &tmp, &mut k3);
        for k in 0..m {
            tmp[k] = u[k] + h * k3[k];
        }
        check_stage(t, &tmp)?;
        rhs(matrix, g, &tmp, &mut k4);
        for k in 0..m {
            u[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
        }
        check_stage(t + h, &u)?;
        let last = step + 1 == steps;
        if (step + 1) % s.stride == 0 || last {
            times.push(if last { s.t_max } else { (step + 1) as f64 * s.dt });
            values.extend(u.iter().map(|v| v.clamp(0.0, 1.0)));
        }
    }
    Ok((times, values))
}

/// Closed-form solution of `u' = w u (1 − u) − γ u` at each time in `t_grid`.
///
/// Written as `u₀ e^{rt} / (1 + w u₀ (e^{rt} − 1)/r)` with `r = w − γ`,
/// which equals `K / (1 + (K/u₀ − 1) e^{−rt})` for `K = 1 − γ/w` and stays
/// finite through the limits `r → 0`, `w = 0` and `u₀ = 0`.
pub fn solve_homogeneous(w: f64, gamma: f64, u0: f64, t_grid: &[f64]) -> Vec<f64> {
    let r = w - gamma;
    t_grid
        .iter()
        .map(|&t| {
            if u0 == 0.0 {
                0.0
            } else if w == 0.0 {
                u0 * (-gamma * t).exp()
            } else if r == 0.0 {
                u0 / (1.0 + w * u0 * t)
            } else if r > 0.0 {
                u0 / ((-r * t).exp() - w * u0 * (-r * t).exp_m1() / r)
            } else {
                u0 * (r * t).exp() / (1.0 + w * u0 * (r * t).exp_m1() / r)
            }
        })
        .collect()
}

/// Block-model system `u^q' = (1 − u^q) Σ_r wI^{qr} wE^{qr} μ_r u^r − γ^q u^q`.
pub fn solve_sbm(
    w_e: &[Vec<f64>],
    w_i: &[Vec<f64>],
    gamma: &[f64],
    mu: &[f64],
    u0: &[f64],
    stepping: Stepping,
) -> Result<MeanFieldSolution> {
    let k = mu.len();
    if w_e.len() != k || w_i.len() != k || gamma.len() != k || u0.len() != k {
        return Err(invalid("block-model inputs must share the class count"));
    }
    let product: Vec<Vec<f64>> = w_e
        .iter()
        .zip(w_i)
        .map(|(re, ri)| {
            if re.len() != k || ri.len() != k {
                return Err(invalid("block-model matrices must be square"));
            }
            Ok(re.iter().zip(ri).map(|(a, b)| a * b).collect())
        })
        .collect::<Result<_>>()?;
    let quad = Quadrature::new((0..k).map(Feature::Class).collect(), mu.to_vec())?;
    let mut sol = solve_general_with(
        &PairFn::table(&product)?,
        &PointFn::PerClass(gamma.to_vec()),
        &quad,
        &PointFn::PerClass(u0.to_vec()),
        stepping,
    )?;
    sol.method = "rk4-sbm";
    Ok(sol)
}

/// `(R₀, u*)` with `R₀ = w/γ` and `u* = max(0, 1 − 1/R₀)`.
pub fn equilibrium(w: f64, gamma: f64) -> Result<(f64, f64)> {
    if !(w >= 0.0 && gamma >= 0.0 && w.is_finite() && gamma.is_finite()) {
        return Err(invalid(format!("rates must be finite and non-negative (w = {w}, γ = {gamma})")));
    }
    if w == 0.0 && gamma == 0.0 {
        return Err(invalid("reproduction number is undefined when w = γ = 0"));
    }
    if gamma == 0.0 {
        return Ok((f64::INFINITY, 1.0));
    }
    let r0 = w / gamma;
    Ok((r0, (1.0 - 1.0 / r0).max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::{FeatureSpace, MeasureSpec};

    fn uniform(m: usize) -> Quadrature {
        Quadrature::for_measure(&FeatureSpace::Interval01, &MeasureSpec::UniformOnSpace, m).unwrap()
    }

    #[test]
    fn homogeneous_examples() {
        let (r0, us) = equilibrium(3.0, 0.7).unwrap();
        assert!((r0 - 3.0 / 0.7).abs() < 1e-12);
        assert!((us - 23.0 / 30.0).abs() < 1e-12);
        assert_eq!(equilibrium(1.0, 2.0).unwrap(), (0.5, 0.0));
        assert_eq!(equilibrium(3.0, 0.0).unwrap(), (f64::INFINITY, 1.0));
        assert!(equilibrium(0.0, 0.0).is_err());

        let u = solve_homogeneous(3.0, 0.7, 1.0, &[1.0]);
        assert!((u[0] - 0.785032).abs() < 1e-6);
        let k = 1.0 - 0.7 / 3.0;
        for v in solve_homogeneous(3.0, 0.7, k, &[0.0, 0.5, 5.0, 80.0]) {
            assert!((v - k).abs() < 1e-15);
        }
        assert_eq!(solve_homogeneous(3.0, 0.7, 0.0, &[1.0]), vec![0.0]);
        assert!((solve_homogeneous(0.0, 0.7, 1.0, &[1.0])[0] - (-0.7f64).exp()).abs() < 1e-15);
        assert!((solve_homogeneous(2.0, 2.0, 0.5, &[3.0])[0] - 0.5 / 4.0).abs() < 1e-15);
        let sub = solve_homogeneous(1.0, 2.0, 1.0, &[30.0])[0];
        assert!(sub > 0.0 && sub < 1e-12);
    }

    #[test]
    fn disease_free_is_fixed() {
        let s = solve_general(&PairFn::Constant(3.0), &PointFn::Constant(0.7), &uniform(8), &PointFn::Constant(0.0), 2.0, 0.01)
            .unwrap();
        assert!(s.last().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pure_decay() {
        let s = solve_general(&PairFn::Constant(0.0), &PointFn::Constant(0.7), &uniform(4), &PointFn::Constant(1.0), 1.0, 1e-3)
            .unwrap();
        assert_eq!(*s.times.last().unwrap(), 1.0);
        for v in s.last() {
            assert!((v - (-0.7f64).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_kernel_reduces_to_logistic() {
        let s = solve_general(&PairFn::Constant(3.0), &PointFn::Constant(0.7), &uniform(16), &PointFn::Constant(1.0), 5.0, 1e-3)
            .unwrap();
        let exact = solve_homogeneous(3.0, 0.7, 1.0, &s.times);
        for (r, e) in exact.iter().enumerate() {
            for v in s.row(r) {
                assert!((v - e).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |dt: f64| {
            let s = solve_general(&PairFn::Constant(3.0), &PointFn::Constant(0.7), &uniform(1), &PointFn::Constant(1.0), 1.0, dt)
                .unwrap();
            (s.last()[0] - solve_homogeneous(3.0, 0.7, 1.0, &[1.0])[0]).abs()
        };
        let ratio = err(0.04) / err(0.02);
        assert!((12.0..20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn sbm_reductions() {
        let st = Stepping::new(3.0, 1e-3);
        let one = solve_sbm(&[vec![0.5]], &[vec![6.0]], &[0.7], &[1.0], &[1.0], st).unwrap();
        let exact = solve_homogeneous(3.0, 0.7, 1.0, &one.times);
        for (r, e) in exact.iter().enumerate() {
            assert!((one.row(r)[0] - e).abs() < 1e-10);
        }

        let sym = solve_sbm(
            &[vec![0.4, 0.2], vec![0.2, 0.4]],
            &[vec![2.0, 1.0], vec![1.0, 2.0]],
            &[0.5, 0.5],
            &[0.5, 0.5],
            &[0.3, 0.3],
            Stepping::new(2.0, 0.01),
        )
        .unwrap();
        for r in 0..sym.times.len() {
            assert_eq!(sym.row(r)[0], sym.row(r)[1]);
        }

        let blocks = solve_sbm(
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[vec![3.0, 0.0], vec![0.0, 3.0]],
            &[0.7, 0.7],
            &[0.5, 0.5],
            &[1.0, 1.0],
            Stepping::new(40.0, 1e-3).with_stride(1000),
        )
        .unwrap();
        let exact = solve_homogeneous(1.5, 0.7, 1.0, &blocks.times);
        for (r, e) in exact.iter().enumerate() {
            assert!((blocks.row(r)[0] - e).abs() < 1e-8);
        }
        assert!((blocks.last()[1] - 8.0 / 15.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_oversized_step() {
        let r = solve_general(&PairFn::Constant(50.0), &PointFn::Constant(40.0), &uniform(2), &PointFn::Constant(1.0), 1.0, 0.5);
        assert!(matches!(r, Err(Error::StepRejected { .. })));
        assert!(solve_general(&PairFn::Constant(1.0), &PointFn::Constant(1.0), &uniform(2), &PointFn::Constant(1.0), 1.0, 0.0).is_err());
    }

    #[test]
    fn monotone_attraction() {
        for u0 in [0.01, 1.0] {
            let s = solve_general(&PairFn::Constant(3.0), &PointFn::Constant(0.7), &uniform(1), &PointFn::Constant(u0), 20.0, 0.005)
                .unwrap();
            let us = 23.0 / 30.0;
            let dist: Vec<f64> = s.times.iter().enumerate().filter(|(_, t)| **t >= 1.0).map(|(r, _)| (s.row(r)[0] - us).abs()).collect();
            assert!(dist.windows(2).all(|w| w[1] <= w[0] + 1e-15));
            assert!(*dist.last().unwrap() <= 1e-4);
        }
    }

    #[test]
    fn csv_header() {
        let s = solve_sbm(&[vec![1.0]], &[vec![1.0]], &[0.5], &[1.0], &[0.5], Stepping::new(0.2, 0.1)).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# nodes: class0");
        assert_eq!(lines[1], "# weights: 1");
        assert_eq!(lines[2], "t,u_0");
        assert_eq!(lines.len(), 6);
    }
}
