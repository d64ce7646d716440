//! Kalman-Bucy filter for the Ornstein-Uhlenbeck drift.
//!
//! The conditional variance solves the Riccati equation
//!
//! ```text
//! dΣ/dt = −Σ²/σ_S² − 2(λ + σ_μρ/σ_S) Σ + (1 − ρ²) σ_μ²,   Σ(start) = 0
//! ```
//!
//! and the conditional mean follows
//!
//! ```text
//! dμ̂ = −λ(μ̂ − μ̄) dt + (Σ + σ_Sσ_μρ)/σ_S dŴ.
//! ```
//!
//! [`RiccatiPath`] integrates the Riccati equation once on a dense grid and
//! interpolates with cubic Hermite polynomials whose slopes are the exact
//! right-hand side. The closed form
//!
//! ```text
//! Σ(t) = √k σ_S (k1 e^{y} + k2)/(k1 e^{y} − k2) − (λσ_S² + σ_Sσ_μρ),   y = 2√k (t − start)/σ_S
//! k  = λ²σ_S² + 2σ_Sσ_μλρ + σ_μ²
//! k1 = √k σ_S + (λσ_S² + σ_Sσ_μρ),   k2 = −√k σ_S + (λσ_S² + σ_Sσ_μρ)
//! ```
//!
//! is kept alongside as a cross-check. With `y` measured from the start time
//! it equals zero at the start, and its long-run limit is `−k2`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::{rk4_integrate, steps_for};
use crate::params::{MarketParams, ModelConfig};

/// Number of cached nodes on `[start, T]`.
pub const RICCATI_GRID_POINTS: usize = 2000;
const RK4_SUBSTEPS: usize = 4;

/// Quadratic right-hand side `q2 Σ² + q1 Σ + q0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RiccatiRhs {
    pub q2: f64,
    pub q1: f64,
    pub q0: f64,
}

impl RiccatiRhs {
    pub fn new(m: &MarketParams) -> Self {
        RiccatiRhs {
            q2: -1.0 / (m.sigma_s * m.sigma_s),
            q1: -2.0 * m.sigma_mu * m.rho / m.sigma_s - 2.0 * m.lambda,
            q0: (1.0 - m.rho * m.rho) * m.sigma_mu * m.sigma_mu,
        }
    }

    #[inline]
    pub fn eval(&self, sigma: f64) -> f64 {
        (self.q2 * sigma + self.q1) * sigma + self.q0
    }

    /// Nonnegative root of the quadratic.
    pub fn stationary(&self) -> f64 {
        // q2 < 0, q0 ≥ 0: roots have opposite signs (or one is zero)
        let disc = (self.q1 * self.q1 - 4.0 * self.q2 * self.q0).max(0.0);
        if self.q1 >= 0.0 {
            (-self.q1 - disc.sqrt()) / (2.0 * self.q2)
        } else {
            // numerically stable: use q0 / (q2 * r_neg)
            let other = (-self.q1 + disc.sqrt()) / (2.0 * self.q2);
            if other == 0.0 {
                -self.q1 / self.q2
            } else {
                self.q0 / (self.q2 * other)
            }
        }
    }
}

/// Constants of the closed-form solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExplicitRiccati {
    pub k: f64,
    pub k1: f64,
    pub k2: f64,
    sqrt_k: f64,
    sigma_s: f64,
}

impl ExplicitRiccati {
    pub fn new(m: &MarketParams) -> Result<Self> {
        let k = m.lambda * m.lambda * m.sigma_s * m.sigma_s
            + 2.0 * m.sigma_s * m.sigma_mu * m.lambda * m.rho
            + m.sigma_mu * m.sigma_mu;
        if !(k > 0.0) {
            return Err(Error::NoInformationDynamics);
        }
        let sqrt_k = k.sqrt();
        let shift = m.lambda * m.sigma_s * m.sigma_s + m.sigma_s * m.sigma_mu * m.rho;
        Ok(ExplicitRiccati {
            k,
            k1: sqrt_k * m.sigma_s + shift,
            k2: -sqrt_k * m.sigma_s + shift,
            sqrt_k,
            sigma_s: m.sigma_s,
        })
    }

    /// Value at elapsed time `x ≥ 0` since the start.
    pub fn at_elapsed(&self, x: f64) -> f64 {
        let shift = 0.5 * (self.k1 + self.k2);
        let ratio = if self.k1 == 0.0 {
            -1.0
        } else {
            let e = (-2.0 * self.sqrt_k * x / self.sigma_s).exp();
            (self.k1 + self.k2 * e) / (self.k1 - self.k2 * e)
        };
        self.sqrt_k * self.sigma_s * ratio - shift
    }

    pub fn stationary(&self) -> f64 {
        -self.k2
    }
}

/// Conditional variance from a start time where it vanishes, up to `T`.
#[derive(Clone, Debug)]
pub struct RiccatiPath {
    start: f64,
    end: f64,
    h: f64,
    rhs: RiccatiRhs,
    values: Vec<f64>,
    slopes: Vec<f64>,
    explicit: Option<ExplicitRiccati>,
}

impl RiccatiPath {
    /// Integrates the Riccati equation from `Σ(start) = 0` on a cached grid.
    pub fn new(market: &MarketParams, start: f64) -> Self {
        let end = market.horizon_t.max(start);
        let rhs = RiccatiRhs::new(market);
        let n = RICCATI_GRID_POINTS;
        let h = (end - start) / (n - 1) as f64;
        let f = |_t: f64, y: &[f64; 1]| [rhs.eval(y[0])];
        let mut values = Vec::with_capacity(n);
        let mut y = [0.0];
        values.push(0.0);
        for i in 1..n {
            let t0 = start + h * (i - 1) as f64;
            y = rk4_integrate(&f, t0, y, t0 + h, RK4_SUBSTEPS);
            values.push(y[0].max(0.0));
        }
        let slopes = values.iter().map(|&v| rhs.eval(v)).collect();
        RiccatiPath {
            start,
            end,
            h,
            rhs,
            values,
            slopes,
            explicit: ExplicitRiccati::new(market).ok(),
        }
    }

    pub fn from_config(config: &ModelConfig, start: f64) -> Self {
        Self::new(&config.market, start)
    }

    #[inline]
    pub fn start(&self) -> f64 {
        self.start
    }

    #[inline]
    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn rhs(&self) -> &RiccatiRhs {
        &self.rhs
    }

    pub fn explicit(&self) -> Option<&ExplicitRiccati> {
        self.explicit.as_ref()
    }

    /// `Σ(t)`, clamped to `[start, T]`.
    pub fn sigma(&self, t: f64) -> f64 {
        if self.h <= 0.0 || t <= self.start {
            return 0.0;
        }
        let x = ((t - self.start) / self.h).min((self.values.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.values.len() - 2);
        let u = x - i as f64;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.slopes[i] * self.h, self.slopes[i + 1] * self.h);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * d0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * d1
    }

    /// `dΣ/dt` from the right-hand side at the interpolated value.
    pub fn sigma_dot(&self, t: f64) -> f64 {
        self.rhs.eval(self.sigma(t))
    }

    /// Closed-form value at `t`, or `None` when `k = 0`.
    pub fn sigma_explicit(&self, t: f64) -> Option<f64> {
        self.explicit
            .map(|e| e.at_elapsed((t - self.start).max(0.0)))
    }

    pub fn stationary(&self) -> f64 {
        self.rhs.stationary()
    }
}

/// Closed-form Riccati path; fails when the market has no information dynamics.
pub fn riccati_explicit(config: &ModelConfig, start: f64) -> Result<RiccatiPath> {
    ExplicitRiccati::new(&config.market)?;
    Ok(RiccatiPath::new(&config.market, start))
}

/// `Σ(t)` by plain RK4 from `Σ(start) = 0` with step at most `step`.
pub fn riccati_ode_oracle(config: &ModelConfig, start: f64, t: f64, step: f64) -> f64 {
    let rhs = RiccatiRhs::new(&config.market);
    let f = |_t: f64, y: &[f64; 1]| [rhs.eval(y[0])];
    if t <= start {
        return 0.0;
    }
    rk4_integrate(&f, start, [0.0], t, steps_for(start, t, step))[0]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FilterState {
    pub mu_hat: f64,
    pub sigma_hat: f64,
    pub t: f64,
}

impl FilterState {
    /// Filter right after entry: the drift is known exactly.
    pub fn at_entry(t: f64, mu: f64) -> Self {
        FilterState {
            mu_hat: mu,
            sigma_hat: 0.0,
            t,
        }
    }
}

/// One Euler-Maruyama step of the conditional mean driven by the innovation
/// increment `dŴ`; the variance is read off the path at the new time.
pub fn filter_step(
    state: FilterState,
    market: &MarketParams,
    path: &RiccatiPath,
    dt: f64,
    innovation_increment: f64,
) -> FilterState {
    let gain = (state.sigma_hat + market.sigma_s * market.sigma_mu * market.rho) / market.sigma_s;
    let t = state.t + dt;
    FilterState {
        mu_hat: state.mu_hat - market.lambda * (state.mu_hat - market.mu_bar) * dt
            + gain * innovation_increment,
        sigma_hat: path.sigma(t),
        t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1() -> ModelConfig {
        ModelConfig::figure1(0.25)
    }

    #[test]
    fn starts_at_zero_with_expected_slope() {
        let c = fig1();
        let path = RiccatiPath::new(&c.market, 2.0);
        assert_eq!(path.sigma(2.0), 0.0);
        let m = &c.market;
        let want = (1.0 - m.rho * m.rho) * m.sigma_mu * m.sigma_mu;
        assert!((path.sigma_dot(2.0) - want).abs() < 1e-15);
        assert!(path.sigma_explicit(2.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn matches_fine_rk4_oracle() {
        let c = fig1();
        let path = RiccatiPath::new(&c.market, 0.0);
        for t in [0.01, 0.3, 1.0, 4.7, 12.5] {
            let oracle = riccati_ode_oracle(&c, 0.0, t, 1e-4);
            assert!((path.sigma(t) - oracle).abs() / oracle < 1e-8, "t={t}");
            let exp = path.sigma_explicit(t).unwrap();
            assert!((exp - oracle).abs() / (1.0 + oracle) < 1e-10, "t={t}");
        }
    }

    #[test]
    fn perfect_correlation_is_zero() {
        for rho in [1.0, -1.0] {
            let mut c = fig1();
            c.market.rho = rho;
            let path = riccati_explicit(&c, 0.0).unwrap();
            for t in [0.0, 1.0, 5.0, 12.5] {
                assert_eq!(path.sigma(t), 0.0);
                assert!(path.sigma_explicit(t).unwrap().abs() < 1e-12);
                assert_eq!(riccati_ode_oracle(&c, 0.0, t, 1e-3), 0.0);
            }
        }
    }

    #[test]
    fn no_information_dynamics() {
        let mut c = fig1();
        c.market.sigma_mu = 0.0;
        c.market.lambda = 0.0;
        assert!(matches!(
            riccati_explicit(&c, 0.0),
            Err(Error::NoInformationDynamics)
        ));
        // the integrated path is still defined and identically zero
        assert_eq!(RiccatiPath::new(&c.market, 0.0).sigma(3.0), 0.0);
    }

    #[test]
    fn stationary_value() {
        let c = fig1();
        let path = RiccatiPath::new(&c.market, 0.0);
        let e = path.explicit().unwrap();
        let s = path.stationary();
        assert!((s + e.k2).abs() < 1e-14);
        assert!(path.rhs().eval(s).abs() < 1e-12);
        assert!((e.at_elapsed(200.0) - s).abs() < 1e-12);
    }

    #[test]
    fn richardson_fourth_order() {
        let c = fig1();
        let fine = riccati_ode_oracle(&c, 0.0, 1.0, 1e-4);
        let e1 = (riccati_ode_oracle(&c, 0.0, 1.0, 0.1) - fine).abs();
        let e2 = (riccati_ode_oracle(&c, 0.0, 1.0, 0.05) - fine).abs();
        let ratio = e1 / e2;
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn filter_step_signs() {
        let mut c = fig1();
        c.market.lambda = 0.0;
        let path = RiccatiPath::new(&c.market, 0.0);
        let s = FilterState::at_entry(0.0, 0.7);
        assert_eq!(filter_step(s, &c.market, &path, 0.01, 0.0).mu_hat, 0.7);
        let c = fig1();
        let path = RiccatiPath::new(&c.market, 0.0);
        let next = filter_step(s, &c.market, &path, 0.01, 0.0);
        assert!(next.mu_hat < 0.7 && next.mu_hat > c.market.mu_bar);
        assert!((next.sigma_hat - path.sigma(0.01)).abs() == 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn nonnegative_monotone_and_matches_explicit(
                lambda in 0.0f64..1.0, sigma_mu in 0.01f64..1.0, rho in -0.99f64..0.99,
                sigma_s in 0.1f64..1.0, start in 0.0f64..10.0,
            ) {
                let mut c = fig1();
                c.market.lambda = lambda;
                c.market.sigma_mu = sigma_mu;
                c.market.rho = rho;
                c.market.sigma_s = sigma_s;
                let path = RiccatiPath::new(&c.market, start);
                let mut prev = 0.0;
                for i in 0..=50 {
                    let t = start + (12.5 - start) * i as f64 / 50.0;
                    let v = path.sigma(t);
                    prop_assert!(v >= 0.0);
                    prop_assert!(v >= prev - 1e-14);
                    let e = path.sigma_explicit(t).unwrap();
                    prop_assert!((v - e).abs() / (1.0 + v) <= 1e-6);
                    prev = v;
                }
            }
        }
    }
}
