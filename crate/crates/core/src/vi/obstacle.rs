//! Reward of entering: `Ψ(t, η) = V̂(t, x0 − κt, z0, η)` with the filter
//! variance restarted at zero at `t`.
//!
//! The reward decays like `|η|⁻⁴` in the drift, so the domain is widened by
//! factors of 1.5 until the edge values fall below `1e−6 max|Ψ|`.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use super::grid::{truncation_half_width, Grid2D};
use crate::error::{Error, Result};
use crate::interior::{InteriorValue, QuadratureSettings};
use crate::params::ModelConfig;

/// Edge-to-peak ratio the truncated domain must reach.
pub const EDGE_RATIO: f64 = 1e-6;
const MAX_WIDENINGS: usize = 12;

/// Row-major `n_t × n_eta` matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Obstacle {
    pub n_t: usize,
    pub n_eta: usize,
    pub values: Vec<f64>,
}

impl Obstacle {
    pub fn from_fn(grid: &Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_t() * grid.n_eta());
        for &t in &grid.t_nodes {
            for &eta in &grid.eta_nodes {
                values.push(f(t, eta));
            }
        }
        Obstacle {
            n_t: grid.n_t(),
            n_eta: grid.n_eta(),
            values,
        }
    }

    pub fn zeros(grid: &Grid2D) -> Self {
        Self::from_fn(grid, |_, _| 0.0)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_eta + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_eta..(i + 1) * self.n_eta]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|Ψ|` on the two drift edges over all slices.
    pub fn max_abs_edge(&self) -> f64 {
        (0..self.n_t).fold(0.0, |m, i| {
            let r = self.row(i);
            m.max(r[0].abs()).max(r[self.n_eta - 1].abs())
        })
    }

    /// `max_edge / max_abs`, zero for a zero obstacle.
    pub fn edge_ratio(&self) -> f64 {
        let peak = self.max_abs();
        if peak == 0.0 {
            0.0
        } else {
            self.max_abs_edge() / peak
        }
    }
}

fn entry_interior(
    config: &ModelConfig,
    t: f64,
    quad: QuadratureSettings,
) -> Result<(InteriorValue, f64)> {
    let iv = InteriorValue::with_quadrature(config, t, quad)?;
    let y = config.wealth_after_cost(t) - iv.subsistence().value(t) * config.habit.z0;
    if !(y > 0.0) {
        return Err(Error::BudgetViolation { t });
    }
    Ok((iv, y))
}

fn obstacle_row(
    config: &ModelConfig,
    t: f64,
    etas: &[f64],
    quad: QuadratureSettings,
) -> Result<Vec<f64>> {
    if t >= config.horizon() {
        return Ok(vec![0.0; etas.len()]);
    }
    let (iv, y) = entry_interior(config, t, quad)?;
    let profile = iv.profile(t);
    Ok(etas
        .iter()
        .map(|&eta| iv.value_from(&profile.eval(eta), y))
        .collect())
}

/// `Ψ` on every grid node; the last slice is exactly zero.
pub fn build_obstacle(config: &ModelConfig, grid: &Grid2D) -> Result<Obstacle> {
    build_obstacle_with(config, grid, QuadratureSettings::default())
}

pub fn build_obstacle_with(
    config: &ModelConfig,
    grid: &Grid2D,
    quad: QuadratureSettings,
) -> Result<Obstacle> {
    let last = grid.n_t() - 1;
    let row = |i: usize| -> Result<Vec<f64>> {
        if i == last {
            Ok(vec![0.0; grid.n_eta()])
        } else {
            obstacle_row(config, grid.t_nodes[i], &grid.eta_nodes, quad)
        }
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Result<Vec<f64>>> = (0..grid.n_t()).into_par_iter().map(row).collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Result<Vec<f64>>> = (0..grid.n_t()).map(row).collect();
    let mut values = Vec::with_capacity(grid.n_t() * grid.n_eta());
    for r in rows {
        values.extend(r?);
    }
    Ok(Obstacle {
        n_t: grid.n_t(),
        n_eta: grid.n_eta(),
        values,
    })
}

/// Smallest half-width `W0·1.5^k` whose edges satisfy the decay criterion,
/// judged on every time node against a coarse estimate of `max|Ψ|`.
pub fn required_half_width(config: &ModelConfig, n_t: usize) -> Result<f64> {
    let m = &config.market;
    let w0 = truncation_half_width(m);
    let horizon = config.horizon();
    let probes: Vec<f64> = (0..41)
        .map(|k| m.mu_bar - w0 + 2.0 * w0 * k as f64 / 40.0)
        .collect();
    let times: Vec<f64> = (0..n_t.saturating_sub(1))
        .map(|i| horizon * i as f64 / (n_t - 1) as f64)
        .collect();

    let mut profiles = Vec::with_capacity(times.len());
    let mut peak: f64 = 0.0;
    for &t in &times {
        let (iv, y) = entry_interior(config, t, QuadratureSettings::default())?;
        let profile = iv.profile(t);
        for &eta in &probes {
            peak = peak.max(iv.value_from(&profile.eval(eta), y).abs());
        }
        profiles.push((iv, profile, y));
    }
    let mut w = w0;
    for _ in 0..=MAX_WIDENINGS {
        let edge = profiles.iter().fold(0.0f64, |acc, (iv, profile, y)| {
            let lo = iv.value_from(&profile.eval(m.mu_bar - w), *y).abs();
            let hi = iv.value_from(&profile.eval(m.mu_bar + w), *y).abs();
            acc.max(lo).max(hi)
        });
        if edge < EDGE_RATIO * peak || peak == 0.0 {
            return Ok(w);
        }
        w *= 1.5;
    }
    Err(Error::Grid(format!(
        "obstacle does not decay to {EDGE_RATIO} of its peak within half-width {w}"
    )))
}

/// Grid and obstacle on an automatically widened drift domain.
pub fn auto_grid(config: &ModelConfig, n_t: usize, n_eta: usize) -> Result<(Grid2D, Obstacle)> {
    let w = required_half_width(config, n_t)?;
    let grid = Grid2D::centered(&config.market, n_t, n_eta, w)?;
    let obstacle = build_obstacle(config, &grid)?;
    Ok((grid, obstacle))
}
