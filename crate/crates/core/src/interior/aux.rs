//! Closed-form solutions of the auxiliary Riccati-type system
//!
//! ```text
//! a_t = −2γ1 a² − 2γ2 a − γ3/2
//! b_t = −2γ1 ab − 2λμ̄ a − γ2 b
//! l_t = −σ_μ² a − (γ1/2) b² − λμ̄ b
//! w_t = −2(1 − ρ²)σ_μ² w² + 2(λσ_S + ρσ_μ)/σ_S w + 1/(2σ_S²)
//! g_t = (1 − ρ²) σ_μ² (w − a)
//! ```
//!
//! on `t ≤ s` with all five vanishing at `t = s`, where
//!
//! ```text
//! γ1 = (1 − p + pρ²) σ_μ²/(1 − p),  γ2 = −λ + pρσ_μ/((1 − p)σ_S),  γ3 = p/((1 − p)σ_S²)
//! Δ  = γ2² − γ1γ3,  ξ = √Δ,  ξ1 = √((1 − ρ²)σ_μ² + (λσ_S + ρσ_μ)²)/σ_S.
//! ```
//!
//! The system is autonomous, so every solution depends on the lag `u = s − t`
//! only. With `E_k = e^{−kξu} − 1` and `den = (ξ − γ2) + (ξ + γ2) e^{−2ξu} > 0`:
//!
//! ```text
//! a = p(1 − e^{−2ξu}) / (2(1 − p)σ_S² den)
//! b = pλμ̄(1 − e^{−ξu})² / ((1 − p)σ_S² ξ den)
//! ```
//!
//! The factor `σ_μ²/(γ2² − ξ²)` in `l` is rewritten as
//! `(1 − p)²σ_S²/(p(1 − p + pρ²))`, which stays finite when `σ_μ = 0`, and
//! every `log(den/(2ξ e^{−ξu}))` is evaluated as `ξu + ln(1 + (ξ + γ2)E_2/(2ξ))`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::rk4_integrate;
use crate::params::ModelConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct AuxValues {
    pub a: f64,
    pub b: f64,
    pub l: f64,
    pub w: f64,
    pub g: f64,
}

impl AuxValues {
    /// `[a, b, l, w, g]`.
    pub fn to_array(self) -> [f64; 5] {
        [self.a, self.b, self.l, self.w, self.g]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        AuxValues {
            a: v[0],
            b: v[1],
            l: v[2],
            w: v[3],
            g: v[4],
        }
    }
}

/// Constants shared by the closed forms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AuxConstants {
    pub delta: f64,
    pub xi: f64,
    pub xi1: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
}

#[derive(Clone, Debug)]
pub struct AuxOdeSolutions {
    pub constants: AuxConstants,
    p: f64,
    lambda: f64,
    mu_bar: f64,
    sigma_s: f64,
    sigma_mu: f64,
    rho: f64,
    /// `(1 − p)σ_S²`.
    scale: f64,
    /// `1 − p + pρ²`.
    q: f64,
    /// `λσ_S + ρσ_μ`.
    c_w: f64,
}

impl AuxOdeSolutions {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        let m = &config.market;
        let p = config.pref.p;
        let q = 1.0 - p + p * m.rho * m.rho;
        let gamma1 = q / (1.0 - p) * m.sigma_mu * m.sigma_mu;
        let gamma2 = -m.lambda + p * m.rho * m.sigma_mu / ((1.0 - p) * m.sigma_s);
        let gamma3 = p / ((1.0 - p) * m.sigma_s * m.sigma_s);
        let delta = crate::params::bounded_solution_condition(config).delta_value;
        let xi = delta.max(0.0).sqrt();
        let c_w = m.lambda * m.sigma_s + m.rho * m.sigma_mu;
        let xi1 = ((1.0 - m.rho * m.rho) * m.sigma_mu * m.sigma_mu + c_w * c_w).sqrt() / m.sigma_s;
        if !(xi > 0.0) {
            return Err(Error::DegenerateConstants("xi = 0"));
        }
        if !(xi1 > 0.0) {
            return Err(Error::DegenerateConstants("xi1 = 0"));
        }
        if q == 0.0 {
            return Err(Error::DegenerateConstants("1 - p + p rho^2 = 0"));
        }
        Ok(AuxOdeSolutions {
            constants: AuxConstants {
                delta,
                xi,
                xi1,
                gamma1,
                gamma2,
                gamma3,
            },
            p,
            lambda: m.lambda,
            mu_bar: m.mu_bar,
            sigma_s: m.sigma_s,
            sigma_mu: m.sigma_mu,
            rho: m.rho,
            scale: (1.0 - p) * m.sigma_s * m.sigma_s,
            q,
            c_w,
        })
    }

    /// Values at `(t, s)`, `t ≤ s`.
    #[inline]
    pub fn at(&self, t: f64, s: f64) -> AuxValues {
        self.at_lag((s - t).max(0.0))
    }

    /// Values at lag `u = s − t ≥ 0`.
    pub fn at_lag(&self, u: f64) -> AuxValues {
        let AuxConstants {
            xi, xi1, gamma2, ..
        } = self.constants;
        let p = self.p;
        let lm = self.lambda * self.mu_bar;

        let e1m = (-xi * u).exp_m1();
        let e2m = (-2.0 * xi * u).exp_m1();
        let den = (xi - gamma2) + (xi + gamma2) * (1.0 + e2m);
        let log_ratio = xi * u + ((xi + gamma2) * e2m / (2.0 * xi)).ln_1p();

        let a = p * (-e2m) / (2.0 * self.scale * den);
        let b = p * lm * e1m * e1m / (self.scale * xi * den);

        let r = (1.0 - p) * (1.0 - p) * self.sigma_s * self.sigma_s / (p * self.q);
        let l1 = p / (2.0 * self.scale) * (lm * lm / (xi * xi) - gamma2 * r) * u;
        // (ξ+2γ2)e2 − 4γ2e1 + 2γ2 − ξ with e_k = 1 + E_k
        let bracket = (xi + 2.0 * gamma2) * e2m - 4.0 * gamma2 * e1m;
        let l2 = p * lm * lm * bracket / (2.0 * self.scale * xi * xi * xi * den);
        let l3 = -(1.0 - p) / (2.0 * self.q) * log_ratio;
        let l = l1 + l2 + l3;

        let s_xi1 = self.sigma_s * xi1;
        let e2w = (-2.0 * xi1 * u).exp_m1();
        let den_w = (s_xi1 + self.c_w) + (s_xi1 - self.c_w) * (1.0 + e2w);
        let w = -(1.0 / (2.0 * self.sigma_s)) * (-e2w) / den_w;
        let log_w = xi1 * u + ((s_xi1 - self.c_w) * e2w / (2.0 * s_xi1)).ln_1p();

        let rho2 = self.rho * self.rho;
        let g = 0.5 * log_w
            - (1.0 - p) * (1.0 - rho2) / (2.0 * self.q) * log_ratio
            - rho2 * self.lambda * u / (2.0 * self.q)
            - self.rho * self.sigma_mu * u / (2.0 * self.q * self.sigma_s);

        AuxValues { a, b, l, w, g }
    }

    /// Right-hand sides `(a_t, b_t, l_t, w_t, g_t)` at the given values.
    pub fn rhs(&self, v: &AuxValues) -> AuxValues {
        let AuxConstants {
            gamma1,
            gamma2,
            gamma3,
            ..
        } = self.constants;
        let lm = self.lambda * self.mu_bar;
        let s2 = self.sigma_mu * self.sigma_mu;
        let rho2 = self.rho * self.rho;
        AuxValues {
            a: -2.0 * gamma1 * v.a * v.a - 2.0 * gamma2 * v.a - 0.5 * gamma3,
            b: -2.0 * gamma1 * v.a * v.b - 2.0 * lm * v.a - gamma2 * v.b,
            l: -s2 * v.a - 0.5 * gamma1 * v.b * v.b - lm * v.b,
            w: -2.0 * (1.0 - rho2) * s2 * v.w * v.w
                + 2.0 * self.c_w / self.sigma_s * v.w
                + 1.0 / (2.0 * self.sigma_s * self.sigma_s),
            g: s2 * (1.0 - rho2) * (v.w - v.a),
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// The five auxiliary functions at `(t, s)` by RK4 integration backward from
/// the zero terminal values at `s`, in `steps` equal steps.
pub fn aux_ode_oracle(aux: &AuxOdeSolutions, t: f64, s: f64, steps: usize) -> AuxValues {
    let f = |_t: f64, y: &[f64; 5]| aux.rhs(&AuxValues::from_array(*y)).to_array();
    AuxValues::from_array(rk4_integrate(
        &f,
        s,
        AuxValues::default().to_array(),
        t,
        steps,
    ))
}
