// SPDX-License-Identifier: Apache-2.0

//! CSV writers for trajectories, per-run summaries, component sizes and
//! coupled records.

use std::io::Write;

use serde::Serialize;

use crate::coupling::CoupledRecord;
use crate::error::Result;
use crate::graph::SampledGraph;
use crate::sis::Trajectory;

pub const TRAJECTORY_HEADER: &str = "t,u,v_giant";
pub const SUMMARY_HEADER: &str = "n,alpha,w_i,run_index,u_hat,sigma_hat,v_hat_giant,sigma_hat_giant,abs_bias";
pub const COMPONENTS_HEADER: &str = "n,edge_count,giant_size,giant_fraction";
pub const COUPLED_HEADER: &str = "t,disagreement,fog_fraction,roots,tv_mass2";

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per recording time; `v_giant` is left empty without a mask.
pub fn write_trajectory<W: Write>(traj: &Trajectory, mut out: W) -> Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for (k, t) in traj.grid.iter().enumerate() {
        let v = traj.v.as_ref().map(|v| v[k]);
        writeln!(out, "{t},{},{}", traj.u[k], opt(v))?;
    }
    Ok(())
}

/// Per-run temporal summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub n: usize,
    /// Sparsity exponent, for points of a scaling family.
    pub alpha: Option<f64>,
    /// Infection-rate bound `sup w_I⁽ⁿ⁾` of the point.
    pub w_i: f64,
    pub run_index: usize,
    pub u_hat: f64,
    pub sigma_hat: f64,
    pub v_hat_giant: Option<f64>,
    pub sigma_hat_giant: Option<f64>,
    /// `|û* − u*|`.
    pub abs_bias: f64,
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], mut out: W) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.n,
            opt(r.alpha),
            r.w_i,
            r.run_index,
            r.u_hat,
            r.sigma_hat,
            opt(r.v_hat_giant),
            opt(r.sigma_hat_giant),
            r.abs_bias
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentsRow {
    pub n: usize,
    pub edge_count: usize,
    pub giant_size: usize,
    pub giant_fraction: f64,
}

impl ComponentsRow {
    pub fn of(graph: &SampledGraph) -> Self {
        Self { n: graph.n(), edge_count: graph.edge_count(), giant_size: graph.giant_size(), giant_fraction: graph.giant_fraction() }
    }
}

pub fn write_components<W: Write>(rows: &[ComponentsRow], mut out: W) -> Result<()> {
    writeln!(out, "{COMPONENTS_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.n, r.edge_count, r.giant_size, r.giant_fraction)?;
    }
    Ok(())
}

/// `tv_mass2` is twice the disagreement fraction.
pub fn write_coupled<W: Write>(rec: &CoupledRecord, mut out: W) -> Result<()> {
    writeln!(out, "{COUPLED_HEADER}")?;
    for (k, t) in rec.grid.iter().enumerate() {
        let d = rec.disagreement[k];
        writeln!(out, "{t},{d},{},{},{}", rec.fog_fraction[k], rec.roots[k], 2.0 * d)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{run_coupled, CoupledConfig};
    use crate::feature::Population;
    use crate::kernel::KernelSpec;
    use crate::sis::{run, EpidemicState, RecordGrid, SimConfig};

    fn text(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn trajectory_columns() {
        let g = SampledGraph::from_edges(Population::homogeneous(3), &[(0, 1)]).unwrap();
        let k = KernelSpec::constant(1.0, 1.0, 1.0).unwrap();
        let tr = run(&g, &k, &EpidemicState::from_flags(vec![false; 3]), &SimConfig::new(1.0, RecordGrid::Step(0.5), 0)).unwrap();
        let s = text(|b| write_trajectory(&tr, b));
        assert_eq!(s, "t,u,v_giant\n0,0,\n0.5,0,\n1,0,\n");
        let masked = SimConfig::new(1.0, RecordGrid::Step(1.0), 0).with_mask(vec![true, true, false]);
        let tr = run(&g, &k, &EpidemicState::from_flags(vec![false; 3]), &masked).unwrap();
        assert_eq!(text(|b| write_trajectory(&tr, b)), "t,u,v_giant\n0,0,0\n1,0,0\n");
    }

    #[test]
    fn summary_and_components() {
        let rows = vec![SummaryRow {
            n: 2000,
            alpha: Some(0.3),
            w_i: 1.2,
            run_index: 4,
            u_hat: 0.75,
            sigma_hat: 0.01,
            v_hat_giant: None,
            sigma_hat_giant: None,
            abs_bias: 0.0166,
        }];
        let s = text(|b| write_summary(&rows, b));
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], SUMMARY_HEADER);
        assert_eq!(lines[1], "2000,0.3,1.2,4,0.75,0.01,,,0.0166");

        let g = SampledGraph::from_edges(Population::homogeneous(4), &[(0, 1), (1, 2)]).unwrap();
        let s = text(|b| write_components(&[ComponentsRow::of(&g)], b));
        assert_eq!(s, "n,edge_count,giant_size,giant_fraction\n4,2,3,0.75\n");
    }

    #[test]
    fn coupled_columns() {
        let g = SampledGraph::from_edges(Population::homogeneous(3), &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let k = KernelSpec::constant(1.0, 0.5, 0.5).unwrap();
        let rec = run_coupled(&g, &k, &EpidemicState::from_flags(vec![true; 3]), &CoupledConfig::new(1.0, RecordGrid::Step(0.5), 1))
            .unwrap();
        let s = text(|b| write_coupled(&rec, b));
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], COUPLED_HEADER);
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "0,0,0,0,0");
    }
}
