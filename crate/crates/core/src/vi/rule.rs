//! Entry rules: stop at the first time the value touches the reward.

use std::sync::Arc;

use super::grid::Grid2D;
use super::solver::VISolution;

/// Gap surface `ṽ − Ψ − tol_gap`, interpolated bilinearly.
#[derive(Clone, Debug)]
pub struct SurfaceRule {
    grid: Grid2D,
    excess: Vec<f64>,
}

impl SurfaceRule {
    pub fn new(sol: &VISolution) -> Self {
        let excess = sol
            .values
            .iter()
            .zip(&sol.obstacle.values)
            .map(|(v, p)| v - p - sol.tol_gap)
            .collect();
        SurfaceRule {
            grid: sol.grid.clone(),
            excess,
        }
    }

    pub fn excess_at(&self, t: f64, eta: f64) -> f64 {
        let n = self.grid.n_eta();
        let (i, u) = self.grid.locate_t(t);
        let (j, w) = self.grid.locate_eta(eta);
        let e = |a: usize, b: usize| self.excess[a * n + b];
        (1.0 - u) * ((1.0 - w) * e(i, j) + w * e(i, j + 1))
            + u * ((1.0 - w) * e(i + 1, j) + w * e(i + 1, j + 1))
    }
}

#[derive(Clone, Debug)]
pub enum StoppingRule {
    /// Enter at time zero.
    Immediate,
    /// Enter at a fixed time (capped at `T`).
    FixedTime(f64),
    /// Enter when the solved surface touches the reward.
    Surface(Arc<SurfaceRule>),
}

impl StoppingRule {
    /// `true` means enter now. Ties and points outside the drift domain stop.
    pub fn should_stop(&self, t: f64, eta: f64, horizon: f64) -> bool {
        if t >= horizon {
            return true;
        }
        match self {
            StoppingRule::Immediate => true,
            StoppingRule::FixedTime(t0) => t >= *t0 - 1e-12,
            StoppingRule::Surface(rule) => {
                let g = &rule.grid;
                if eta <= g.eta_min() || eta >= g.eta_max() {
                    return true;
                }
                rule.excess_at(t, eta) <= 0.0
            }
        }
    }
}

/// Mask lookup rule from a solved surface.
pub fn entry_rule(sol: &VISolution) -> StoppingRule {
    StoppingRule::Surface(Arc::new(SurfaceRule::new(sol)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelConfig;
    use crate::vi::{solve_vi, Obstacle, Scheme};

    #[test]
    fn rule_agrees_with_mask_at_nodes() {
        let c = ModelConfig::figure1(0.25);
        let grid = Grid2D::centered(&c.market, 21, 61, 3.0).unwrap();
        let obs = Obstacle::from_fn(&grid, |t, eta| (eta - 0.25).powi(2) * (-t / 4.0).exp());
        let sol = solve_vi(&c.market, &grid, &obs, Scheme::default()).unwrap();
        let rule = entry_rule(&sol);
        for i in 0..grid.n_t() {
            for j in 1..grid.n_eta() - 1 {
                let stop = rule.should_stop(grid.t_nodes[i], grid.eta_nodes[j], 12.5);
                if i < grid.n_t() - 1 {
                    assert_eq!(stop, !sol.in_continuation(i, j), "node ({i},{j})");
                } else {
                    assert!(stop);
                }
            }
        }
        assert!(rule.should_stop(12.5, 0.25, 12.5));
    }
}
