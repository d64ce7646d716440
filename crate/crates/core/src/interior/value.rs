//! Interior value and feedback policies after entry.
//!
//! ```text
//! N(t, η) = ∫_t^T F(s) exp(A(t,s)η² + B(t,s)η + C(t,s)) ds,   F(s) = (1 + δ(s)m(s))^{p/(p−1)}
//! V(t, x, z, η) = N^{1−p} (x − m(t)z)^p / p
//! π* = [η/((1−p)σ_S²) + (Σ(t) + σ_Sσ_μρ)/σ_S² · N_η/N] (x − m(t)z)
//! c* = z + (x − m(t)z) / ((1 + δ(t)m(t))^{1/(1−p)} N)
//! ```
//!
//! `N` is integrated with a composite 16-point Gauss-Legendre rule. The
//! exponents at the quadrature nodes depend on `t` only, so an [`NProfile`]
//! caches them once per time and then evaluates `N`, `N_η/N` and `N_ηη/N` for
//! any `η` with a log-sum-exp reduction.

use serde::Serialize;

use super::abc::abc_from_values;
use super::aux::AuxOdeSolutions;
use super::subsistence::SubsistenceCost;
use crate::error::{Error, Result};
use crate::filtering::RiccatiPath;
use crate::ode::fd_derivative;
use crate::params::ModelConfig;
use crate::quadrature::GaussLegendre;

/// Composite-rule resolution: `max(min_panels, ⌈per_year (T − t)⌉)` panels,
/// times `refine`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadratureSettings {
    pub min_panels: usize,
    pub panels_per_year: f64,
    pub refine: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            min_panels: 8,
            panels_per_year: 4.0,
            refine: 1,
        }
    }
}

impl QuadratureSettings {
    pub fn panels(&self, length: f64) -> usize {
        self.min_panels
            .max((self.panels_per_year * length).ceil() as usize)
            * self.refine.max(1)
    }
}

/// `ln N` and the normalized η-derivatives at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NEval {
    /// `ln N`; `−∞` at `t = T`.
    pub ln_n: f64,
    /// `N_η / N`.
    pub eta_ratio: f64,
    /// `N_ηη / N`.
    pub eta_eta_ratio: f64,
}

impl NEval {
    pub fn n(&self) -> f64 {
        self.ln_n.exp()
    }
}

/// Quadrature nodes of `N(t, ·)` at a fixed time.
#[derive(Clone, Debug)]
pub struct NProfile {
    pub t: f64,
    pub sigma: f64,
    pub m: f64,
    /// `1 + δ(t)m(t)`.
    pub habit_factor: f64,
    a: Vec<f64>,
    b: Vec<f64>,
    /// `C + ln F + ln(weight)`.
    c: Vec<f64>,
}

impl NProfile {
    pub fn is_terminal(&self) -> bool {
        self.a.is_empty()
    }

    pub fn eval(&self, eta: f64) -> NEval {
        if self.a.is_empty() {
            return NEval {
                ln_n: f64::NEG_INFINITY,
                eta_ratio: 0.0,
                eta_eta_ratio: 0.0,
            };
        }
        let mut max = f64::NEG_INFINITY;
        for k in 0..self.a.len() {
            let e = (self.a[k] * eta + self.b[k]) * eta + self.c[k];
            max = max.max(e);
        }
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for k in 0..self.a.len() {
            let e = (self.a[k] * eta + self.b[k]) * eta + self.c[k];
            let w = (e - max).exp();
            let d = 2.0 * self.a[k] * eta + self.b[k];
            s0 += w;
            s1 += w * d;
            s2 += w * (2.0 * self.a[k] + d * d);
        }
        NEval {
            ln_n: max + s0.ln(),
            eta_ratio: s1 / s0,
            eta_eta_ratio: s2 / s0,
        }
    }

    pub fn nodes(&self) -> usize {
        self.a.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Policies {
    pub pi_star: f64,
    pub c_star: f64,
}

/// Everything reported by a single interior evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InteriorEvaluation {
    pub t: f64,
    pub x: f64,
    pub z: f64,
    pub eta: f64,
    pub value: f64,
    pub pi_star: f64,
    pub c_star: f64,
    pub n: f64,
    pub n_eta: f64,
    pub n_eta_eta: f64,
    pub sigma_hat: f64,
    pub m: f64,
}

/// Closed-form interior problem entered at `start` with `Σ(start) = 0`.
#[derive(Clone, Debug)]
pub struct InteriorValue {
    config: ModelConfig,
    riccati: RiccatiPath,
    aux: AuxOdeSolutions,
    m: SubsistenceCost,
    quad: QuadratureSettings,
    /// Segment ends in `(0, T]` where α or δ jump, plus `T`.
    breaks: Vec<f64>,
}

impl InteriorValue {
    pub fn new(config: &ModelConfig, start: f64) -> Result<Self> {
        Self::with_quadrature(config, start, QuadratureSettings::default())
    }

    pub fn with_quadrature(
        config: &ModelConfig,
        start: f64,
        quad: QuadratureSettings,
    ) -> Result<Self> {
        if !(config.pref.p < 0.0) {
            return Err(Error::InvalidConfig(crate::params::validate(config)));
        }
        let horizon = config.horizon();
        let mut breaks: Vec<f64> = config
            .habit
            .alpha
            .breaks()
            .iter()
            .chain(config.habit.delta.breaks())
            .copied()
            .filter(|&b| b > 0.0 && b < horizon)
            .collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        breaks.push(horizon);
        Ok(InteriorValue {
            config: config.clone(),
            riccati: RiccatiPath::new(&config.market, start),
            aux: AuxOdeSolutions::new(config)?,
            m: SubsistenceCost::new(&config.habit, horizon),
            quad,
            breaks,
        })
    }

    /// Same model with a different quadrature resolution.
    pub fn refined(&self, quad: QuadratureSettings) -> Self {
        InteriorValue {
            quad,
            ..self.clone()
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn riccati(&self) -> &RiccatiPath {
        &self.riccati
    }

    pub fn aux(&self) -> &AuxOdeSolutions {
        &self.aux
    }

    pub fn subsistence(&self) -> &SubsistenceCost {
        &self.m
    }

    pub fn start(&self) -> f64 {
        self.riccati.start()
    }

    pub fn horizon(&self) -> f64 {
        self.config.horizon()
    }

    /// Caches the quadrature exponents of `N(t, ·)`.
    pub fn profile(&self, t: f64) -> NProfile {
        let horizon = self.horizon();
        let t = t.clamp(self.start(), horizon);
        let p = self.config.pref.p;
        let sigma = self.riccati.sigma(t);
        let m_t = self.m.value(t);
        let habit_factor = 1.0 + self.config.habit.delta.at(t) * m_t;
        let mut profile = NProfile {
            t,
            sigma,
            m: m_t,
            habit_factor,
            a: Vec::new(),
            b: Vec::new(),
            c: Vec::new(),
        };
        let length = horizon - t;
        if length <= 0.0 {
            return profile;
        }
        let total = self.quad.panels(length);
        let rule = GaussLegendre::sixteen();
        let cap = total * rule.len() + self.breaks.len() * rule.len();
        profile.a.reserve(cap);
        profile.b.reserve(cap);
        profile.c.reserve(cap);
        let exponent = p / (p - 1.0);

        let mut lo = t;
        for &hi in self.breaks.iter().filter(|&&b| b > t) {
            let panels = ((total as f64) * (hi - lo) / length).ceil().max(1.0) as usize;
            rule.for_each_node(lo, hi, panels, |s, w| {
                let v = self.aux.at(t, s);
                let abc = abc_from_values(&v, sigma, p).expect("log arguments positive for p < 0");
                let f = 1.0 + self.config.habit.delta.at(s) * self.m.value(s);
                profile.a.push(abc.a);
                profile.b.push(abc.b);
                profile.c.push(abc.c + exponent * f.ln() + w.ln());
            });
            lo = hi;
        }
        profile
    }

    pub fn n_eval(&self, t: f64, eta: f64) -> NEval {
        self.profile(t).eval(eta)
    }

    pub fn n_value(&self, t: f64, eta: f64) -> f64 {
        self.n_eval(t, eta).n()
    }

    pub fn n_eta(&self, t: f64, eta: f64) -> f64 {
        let e = self.n_eval(t, eta);
        e.eta_ratio * e.n()
    }

    pub fn n_eta_eta(&self, t: f64, eta: f64) -> f64 {
        let e = self.n_eval(t, eta);
        e.eta_eta_ratio * e.n()
    }

    fn surplus(&self, t: f64, x: f64, z: f64) -> Result<(f64, f64)> {
        let m = self.m.value(t);
        let y = x - m * z;
        if !(y > 0.0) {
            return Err(Error::BelowSubsistence { t, x, floor: m * z });
        }
        Ok((y, m))
    }

    /// `V = N^{1−p} (x − m(t)z)^p / p`.
    pub fn value_from(&self, n: &NEval, y: f64) -> f64 {
        let p = self.config.pref.p;
        ((1.0 - p) * n.ln_n + p * y.ln()).exp() / p
    }

    pub fn value(&self, t: f64, x: f64, z: f64, eta: f64) -> Result<f64> {
        let (y, _) = self.surplus(t, x, z)?;
        Ok(self.value_from(&self.n_eval(t, eta), y))
    }

    /// Policies from a cached profile and surplus `y = x − m(t)z`.
    pub fn policies_from(
        &self,
        profile: &NProfile,
        n: &NEval,
        z: f64,
        eta: f64,
        y: f64,
    ) -> Policies {
        let mk = &self.config.market;
        let p = self.config.pref.p;
        let s2 = mk.sigma_s * mk.sigma_s;
        let hedge = (profile.sigma + mk.sigma_s * mk.sigma_mu * mk.rho) / s2;
        let pi_star = (eta / ((1.0 - p) * s2) + hedge * n.eta_ratio) * y;
        let c_star = z + y * (-(profile.habit_factor.ln() / (1.0 - p)) - n.ln_n).exp();
        Policies { pi_star, c_star }
    }

    pub fn feedback_policies(&self, t: f64, x: f64, z: f64, eta: f64) -> Result<Policies> {
        let (y, _) = self.surplus(t, x, z)?;
        let profile = self.profile(t);
        let n = profile.eval(eta);
        Ok(self.policies_from(&profile, &n, z, eta, y))
    }

    pub fn evaluate(&self, t: f64, x: f64, z: f64, eta: f64) -> Result<InteriorEvaluation> {
        let (y, m) = self.surplus(t, x, z)?;
        let profile = self.profile(t);
        let n = profile.eval(eta);
        let pol = self.policies_from(&profile, &n, z, eta, y);
        let nv = n.n();
        Ok(InteriorEvaluation {
            t,
            x,
            z,
            eta,
            value: self.value_from(&n, y),
            pi_star: pol.pi_star,
            c_star: pol.c_star,
            n: nv,
            n_eta: n.eta_ratio * nv,
            n_eta_eta: n.eta_eta_ratio * nv,
            sigma_hat: profile.sigma,
            m,
        })
    }

    /// Residual of the stage-2 HJB equation with the feedback optimizers
    /// substituted; `V_t` uses a second-order difference of `N` in `t`.
    pub fn hjb_residual(&self, t: f64, x: f64, z: f64, eta: f64) -> Result<HjbResidual> {
        let (y, m) = self.surplus(t, x, z)?;
        let mk = &self.config.market;
        let p = self.config.pref.p;
        let alpha = self.config.habit.alpha.at(t);
        let delta = self.config.habit.delta.at(t);
        let profile = self.profile(t);
        let ne = profile.eval(eta);
        let n = ne.n();
        let n_eta = ne.eta_ratio * n;
        let n_ee = ne.eta_eta_ratio * n;
        let h = 1e-4 * (1.0 + t.abs());
        let n_t = fd_derivative(|s| self.n_value(s, eta), t, h, self.start(), self.horizon());
        let m_dot = self.m.derivative(t);

        let n1p = n.powf(1.0 - p);
        let yp = y.powf(p);
        let v_x = n1p * y.powf(p - 1.0);
        let v_xx = (p - 1.0) * n1p * y.powf(p - 2.0);
        let v_z = -m * v_x;
        let v_eta = (1.0 - p) * n.powf(-p) * n_eta * yp / p;
        let v_ee = (1.0 - p) / p * yp * (-p * n.powf(-p - 1.0) * n_eta * n_eta + n.powf(-p) * n_ee);
        let v_xe = (1.0 - p) * n.powf(-p) * n_eta * y.powf(p - 1.0);
        let v_t = (1.0 - p) * n.powf(-p) * n_t * yp / p + v_x * (-m_dot * z);
        let value = n1p * yp / p;

        let sig = profile.sigma + mk.sigma_s * mk.sigma_mu * mk.rho;
        let pol = self.policies_from(&profile, &ne, z, eta, y);
        let (pi, c) = (pol.pi_star, pol.c_star);
        let terms = [
            v_t,
            -alpha * z * v_z,
            -mk.lambda * (eta - mk.mu_bar) * v_eta,
            sig * sig / (2.0 * mk.sigma_s * mk.sigma_s) * v_ee,
            -c * v_x,
            c * delta * v_z,
            (c - z).powf(p) / p,
            pi * eta * v_x,
            0.5 * mk.sigma_s * mk.sigma_s * pi * pi * v_xx,
            v_xe * sig * pi,
        ];
        let residual: f64 = terms.iter().sum();
        let magnitude: f64 = terms.iter().map(|x| x.abs()).sum();
        Ok(HjbResidual {
            residual,
            value,
            relative_to_value: residual.abs() / (value.abs() + 1.0),
            relative_to_terms: residual.abs() / magnitude.max(f64::MIN_POSITIVE),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HjbResidual {
    pub residual: f64,
    pub value: f64,
    /// `|residual| / (|V| + 1)`.
    pub relative_to_value: f64,
    /// `|residual| / Σ|terms|`, insensitive to the overall scale of `V`.
    pub relative_to_terms: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv() -> InteriorValue {
        InteriorValue::new(&ModelConfig::figure1(0.25), 0.0).unwrap()
    }

    #[test]
    fn terminal_zero() {
        let iv = iv();
        assert_eq!(iv.n_value(12.5, 0.3), 0.0);
        assert_eq!(iv.value(12.5, 1e6, 0.5, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn unit_surplus_identity() {
        let iv = iv();
        for (t, eta) in [(0.0, 0.25), (3.0, -0.5), (11.0, 1.2)] {
            let x = iv.subsistence().value(t) * 0.5 + 1.0;
            let n = iv.n_value(t, eta);
            let v = iv.value(t, x, 0.5, eta).unwrap();
            assert!((v + n * n).abs() <= 1e-12 * n * n, "t={t}");
        }
    }

    #[test]
    fn below_subsistence_is_domain_error() {
        let iv = iv();
        let floor = iv.subsistence().value(1.0) * 0.5;
        assert!(matches!(
            iv.value(1.0, floor, 0.5, 0.0),
            Err(Error::BelowSubsistence { .. })
        ));
    }

    #[test]
    fn quadrature_refinement() {
        let iv = iv();
        let fine = iv.refined(QuadratureSettings {
            refine: 2,
            ..Default::default()
        });
        for (t, eta) in [(0.0, 0.25), (5.0, 2.0), (12.0, -1.0)] {
            let (a, b) = (iv.n_value(t, eta), fine.n_value(t, eta));
            assert!((a / b - 1.0).abs() < 1e-8, "t={t} eta={eta}");
        }
    }

    #[test]
    fn eta_derivatives_match_differences() {
        let iv = iv();
        let h = 1e-4;
        for (t, eta) in [(0.0, 0.25), (4.0, -0.8), (10.0, 1.5)] {
            let fd = (iv.n_value(t, eta + h) - iv.n_value(t, eta - h)) / (2.0 * h);
            let an = iv.n_eta(t, eta);
            assert!((an - fd).abs() <= 1e-6 * an.abs().max(1e-3 * iv.n_value(t, eta)));
            let fd2 = (iv.n_eta(t, eta + h) - iv.n_eta(t, eta - h)) / (2.0 * h);
            let an2 = iv.n_eta_eta(t, eta);
            assert!((an2 - fd2).abs() <= 1e-6 * an2.abs().max(1e-3 * iv.n_value(t, eta)));
        }
    }

    #[test]
    fn policies_scale_with_surplus() {
        let iv = iv();
        let floor = iv.subsistence().value(2.0) * 0.5;
        let near = iv.feedback_policies(2.0, floor + 1e-9, 0.5, 0.3).unwrap();
        assert!(near.pi_star.abs() < 1e-8);
        assert!(near.c_star > 0.5 && near.c_star - 0.5 < 1e-8);
        let far = iv.feedback_policies(2.0, 1e6, 0.5, 0.3).unwrap();
        assert!(far.c_star > 0.5);
    }

    #[test]
    fn hedging_term_at_zero_drift() {
        let mut cfg = ModelConfig::figure1(0.25);
        cfg.market.rho = 0.0;
        let iv = InteriorValue::new(&cfg, 0.0).unwrap();
        let (t, x, z) = (3.0, 1e5, 0.5);
        let y = x - iv.subsistence().value(t) * z;
        let sig = iv.riccati().sigma(t);
        let want = sig / 0.25 * iv.n_eta(t, 0.0) / iv.n_value(t, 0.0) * y;
        let got = iv.feedback_policies(t, x, z, 0.0).unwrap().pi_star;
        assert!((got - want).abs() <= 1e-12 * want.abs());
    }

    #[test]
    fn hjb_residual_small() {
        let iv = iv();
        for (t, eta) in [(0.5, 0.25), (6.0, -0.4), (11.0, 0.9)] {
            let r = iv.hjb_residual(t, 2e5, 0.5, eta).unwrap();
            assert!(r.relative_to_terms < 1e-6, "{r:?}");
        }
    }
}
