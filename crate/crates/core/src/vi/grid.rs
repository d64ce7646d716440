//! Uniform `(t, η)` grids and the drift-domain truncation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::MarketParams;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid2D {
    pub t_nodes: Vec<f64>,
    pub eta_nodes: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
    v[n - 1] = hi;
    v
}

impl Grid2D {
    /// `n_t` times on `[0, horizon]` and `n_eta` drift levels on `[eta_min, eta_max]`.
    pub fn uniform(
        horizon: f64,
        n_t: usize,
        eta_min: f64,
        eta_max: f64,
        n_eta: usize,
    ) -> Result<Self> {
        if n_t < 2 {
            return Err(Error::Grid(format!(
                "need at least 2 time nodes, got {n_t}"
            )));
        }
        if n_eta < 3 {
            return Err(Error::Grid(format!(
                "need at least 3 drift nodes, got {n_eta}"
            )));
        }
        if !(eta_max > eta_min) || !(horizon > 0.0) {
            return Err(Error::Grid("empty domain".into()));
        }
        Ok(Grid2D {
            t_nodes: linspace(0.0, horizon, n_t),
            eta_nodes: linspace(eta_min, eta_max, n_eta),
        })
    }

    /// Grid on `[μ̄ − W, μ̄ + W]`; requires `η_min < μ̄ < η_max`.
    pub fn centered(
        market: &MarketParams,
        n_t: usize,
        n_eta: usize,
        half_width: f64,
    ) -> Result<Self> {
        Self::uniform(
            market.horizon_t,
            n_t,
            market.mu_bar - half_width,
            market.mu_bar + half_width,
            n_eta,
        )
    }

    pub fn n_t(&self) -> usize {
        self.t_nodes.len()
    }

    pub fn n_eta(&self) -> usize {
        self.eta_nodes.len()
    }

    pub fn dt(&self) -> f64 {
        self.t_nodes[1] - self.t_nodes[0]
    }

    pub fn deta(&self) -> f64 {
        self.eta_nodes[1] - self.eta_nodes[0]
    }

    pub fn eta_min(&self) -> f64 {
        self.eta_nodes[0]
    }

    pub fn eta_max(&self) -> f64 {
        self.eta_nodes[self.n_eta() - 1]
    }

    pub fn horizon(&self) -> f64 {
        self.t_nodes[self.n_t() - 1]
    }

    /// Cell index and fractional position of `eta`, clamped to the grid.
    pub fn locate_eta(&self, eta: f64) -> (usize, f64) {
        locate(&self.eta_nodes, eta)
    }

    pub fn locate_t(&self, t: f64) -> (usize, f64) {
        locate(&self.t_nodes, t)
    }
}

fn locate(nodes: &[f64], x: f64) -> (usize, f64) {
    let n = nodes.len();
    let h = nodes[1] - nodes[0];
    let y = ((x - nodes[0]) / h).clamp(0.0, (n - 1) as f64);
    let i = (y.floor() as usize).min(n - 2);
    (i, y - i as f64)
}

/// Initial half-width of the drift domain around `μ̄`:
/// `max(6σ_μ/√(2λ), 4σ_μ√T, |μ0 − μ̄| + 4σ_μ√T)`, at least 1.
pub fn truncation_half_width(market: &MarketParams) -> f64 {
    let spread = 4.0 * market.sigma_mu * market.horizon_t.sqrt();
    let mut w = spread.max((market.mu0 - market.mu_bar).abs() + spread);
    if market.lambda > 0.0 {
        w = w.max(6.0 * market.sigma_mu / (2.0 * market.lambda).sqrt());
    }
    w.max(1.0).max((market.mu0 - market.mu_bar).abs() * 1.25)
}
