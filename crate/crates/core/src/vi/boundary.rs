//! Free-boundary extraction from a solved surface.
//!
//! On each slice the stopping set is `{ṽ − Ψ ≤ tol_gap}`. Scanning inward from
//! each drift edge, the first continuation node marks the barrier; its level
//! is the linear zero of `ṽ − Ψ − tol_gap` between that node and its stopping
//! neighbour. A barrier found next to the edge node is censored: the true
//! level may lie beyond the truncated domain.

use serde::Serialize;

use super::solver::VISolution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// Every node stops (e.g. the last slice).
    FullStop,
    /// Continuation nodes exist; barriers on both sides.
    TwoSided,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundaryRecord {
    pub t: f64,
    pub region: Region,
    pub lower_eta: Option<f64>,
    pub upper_eta: Option<f64>,
    /// Barrier sits at the first node inside the lower edge.
    pub lower_censored: bool,
    pub upper_censored: bool,
}

impl BoundaryRecord {
    /// Distances `(μ̄ − lower, upper − μ̄)` of the barriers from a reference level.
    pub fn distances(&self, mu_bar: f64) -> (Option<f64>, Option<f64>) {
        (
            self.lower_eta.map(|l| mu_bar - l),
            self.upper_eta.map(|u| u - mu_bar),
        )
    }
}

pub fn extract_boundary(sol: &VISolution) -> Vec<BoundaryRecord> {
    let grid = &sol.grid;
    let n = grid.n_eta();
    let etas = &grid.eta_nodes;
    (0..grid.n_t())
        .map(|i| {
            let t = grid.t_nodes[i];
            let excess = |j: usize| sol.gap(i, j) - sol.tol_gap;
            let first = (0..n).find(|&j| excess(j) > 0.0);
            let last = (0..n).rev().find(|&j| excess(j) > 0.0);
            match (first, last) {
                (Some(lo), Some(hi)) => {
                    let cross = |a: usize, b: usize| {
                        let (ea, eb) = (excess(a), excess(b));
                        let w = ea / (ea - eb);
                        etas[a] + w * (etas[b] - etas[a])
                    };
                    let lower_eta = if lo == 0 { etas[0] } else { cross(lo - 1, lo) };
                    let upper_eta = if hi == n - 1 {
                        etas[n - 1]
                    } else {
                        cross(hi, hi + 1)
                    };
                    BoundaryRecord {
                        t,
                        region: Region::TwoSided,
                        lower_eta: Some(lower_eta),
                        upper_eta: Some(upper_eta),
                        lower_censored: lo <= 1,
                        upper_censored: hi + 2 >= n,
                    }
                }
                _ => BoundaryRecord {
                    t,
                    region: Region::FullStop,
                    lower_eta: None,
                    upper_eta: None,
                    lower_censored: false,
                    upper_censored: false,
                },
            }
        })
        .collect()
}
