//! Random streams and the exact joint transition of `(μ, W)`.
//!
//! Over a step `h` the OU drift and the stock Brownian increment are jointly
//! Gaussian:
//!
//! ```text
//! μ' = μ̄ + (μ − μ̄)e^{−λh} + I,   Var I = σ_μ²(1 − e^{−2λh})/(2λ)
//! ΔW ~ N(0, h),                   Cov(I, ΔW) = ρσ_μ(1 − e^{−λh})/λ
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::params::MarketParams;

/// Independent stream number `stream` of the generator seeded by `seed`.
pub fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[inline]
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `(1 − e^{−kh})/k`, continuous at `k = 0`.
#[inline]
fn decay_integral(k: f64, h: f64) -> f64 {
    if k == 0.0 {
        h
    } else {
        -(-k * h).exp_m1() / k
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OuTransition {
    pub h: f64,
    decay: f64,
    mu_bar: f64,
    sd_w: f64,
    load_w: f64,
    load_free: f64,
}

impl OuTransition {
    pub fn new(market: &MarketParams, h: f64) -> Self {
        let var_i = market.sigma_mu * market.sigma_mu * decay_integral(2.0 * market.lambda, h);
        let cov = market.rho * market.sigma_mu * decay_integral(market.lambda, h);
        let sd_w = h.sqrt();
        let load_w = if sd_w > 0.0 { cov / sd_w } else { 0.0 };
        OuTransition {
            h,
            decay: (-market.lambda * h).exp(),
            mu_bar: market.mu_bar,
            sd_w,
            load_w,
            load_free: (var_i - load_w * load_w).max(0.0).sqrt(),
        }
    }

    /// Next drift and the stock increment from two standard normals.
    #[inline]
    pub fn step(&self, mu: f64, z1: f64, z2: f64) -> (f64, f64) {
        let mu_next =
            self.mu_bar + (mu - self.mu_bar) * self.decay + self.load_w * z1 + self.load_free * z2;
        (mu_next, self.sd_w * z1)
    }

    /// Drift-only step (stock increment not needed).
    #[inline]
    pub fn step_drift(&self, mu: f64, z: f64) -> f64 {
        let sd = (self.load_w * self.load_w + self.load_free * self.load_free).sqrt();
        self.mu_bar + (mu - self.mu_bar) * self.decay + sd * z
    }
}
