//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use habit_entry::interior::InteriorValue;
use habit_entry::params::MarketParams;
use habit_entry::vi::{Grid2D, Obstacle};
use habit_entry::ModelConfig;

/// Test obstacle with a genuine two-sided stopping region:
/// `Ψ = (η − μ̄)² e^{−t/4}`.
pub fn synthetic(t: f64, eta: f64, mu_bar: f64) -> f64 {
    (eta - mu_bar).powi(2) * (-t / 4.0).exp()
}

pub fn synthetic_obstacle(grid: &Grid2D, mu_bar: f64) -> Obstacle {
    Obstacle::from_fn(grid, |t, eta| synthetic(t, eta, mu_bar))
}

/// Trinomial lattice for the OU drift on nodes `μ̄ + jh`, `|j| ≤ J`,
/// `h = σ_μ√(3Δt)`. Branch probabilities match the conditional mean `bΔt`
/// and second moment `σ²Δt + (bΔt)²`:
///
/// ```text
/// p_± = 1/6 + x²/2 ± x/2,  p_0 = 2/3 − x²,  x = bΔt/h
/// ```
pub struct Trinomial {
    pub dt: f64,
    pub h: f64,
    pub half_nodes: usize,
    pub n_steps: usize,
    pub mu_bar: f64,
}

impl Trinomial {
    pub fn new(market: &MarketParams, n_steps: usize, half_nodes: usize) -> Self {
        let dt = market.horizon_t / n_steps as f64;
        Trinomial {
            dt,
            h: market.sigma_mu * (3.0 * dt).sqrt(),
            half_nodes,
            n_steps,
            mu_bar: market.mu_bar,
        }
    }

    pub fn eta(&self, j: usize) -> f64 {
        self.mu_bar + (j as f64 - self.half_nodes as f64) * self.h
    }

    pub fn grid(&self, horizon: f64) -> Grid2D {
        let w = self.half_nodes as f64 * self.h;
        Grid2D::uniform(
            horizon,
            self.n_steps + 1,
            self.mu_bar - w,
            self.mu_bar + w,
            2 * self.half_nodes + 1,
        )
        .unwrap()
    }

    /// Snell envelope by backward induction; edge nodes stop. Returns the
    /// time-zero row.
    pub fn snell(&self, market: &MarketParams, reward: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let n = 2 * self.half_nodes + 1;
        let horizon = self.dt * self.n_steps as f64;
        let mut v: Vec<f64> = (0..n).map(|j| reward(horizon, self.eta(j))).collect();
        for i in (0..self.n_steps).rev() {
            let t = i as f64 * self.dt;
            let next = v.clone();
            for j in 0..n {
                let stop = reward(t, self.eta(j));
                if j == 0 || j == n - 1 {
                    v[j] = stop;
                    continue;
                }
                let x = -market.lambda * (self.eta(j) - market.mu_bar) * self.dt / self.h;
                let (pu, pd) = (
                    1.0 / 6.0 + x * x / 2.0 + x / 2.0,
                    1.0 / 6.0 + x * x / 2.0 - x / 2.0,
                );
                let pm = 1.0 - pu - pd;
                assert!(pm >= 0.0, "lattice too coarse for the drift at node {j}");
                v[j] = stop.max(pu * next[j + 1] + pm * next[j] + pd * next[j - 1]);
            }
        }
        v
    }
}

/// Best single entry time along the deterministic drift path
/// `μ_t = μ̄ + (μ0 − μ̄)e^{−λt}`, scanned on `n + 1` equally spaced times.
/// Returns `(t*, value)`.
pub fn deterministic_scan(
    config: &ModelConfig,
    n: usize,
    reward: impl Fn(f64, f64) -> f64,
) -> (f64, f64) {
    let m = &config.market;
    let horizon = config.horizon();
    (0..=n)
        .map(|k| {
            let t = horizon * k as f64 / n as f64;
            let mu = m.mu_bar + (m.mu0 - m.mu_bar) * (-m.lambda * t).exp();
            (t, reward(t, mu))
        })
        .fold((0.0, f64::NEG_INFINITY), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        })
}

/// Reward of entering at `(t, μ)` for the model, with the filter restarted at `t`.
pub fn model_reward(config: &ModelConfig, t: f64, mu: f64) -> f64 {
    if t >= config.horizon() {
        return 0.0;
    }
    let iv = InteriorValue::new(config, t).unwrap();
    iv.value(t, config.wealth_after_cost(t), config.habit.z0, mu)
        .unwrap()
}
