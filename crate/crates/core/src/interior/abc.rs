//! Exponent coefficients of the integrand of `N`:
//!
//! ```text
//! A = a / ((1 − p)(1 − 2aΣ))
//! B = b / ((1 − p)(1 − 2aΣ))
//! C = [ l + Σb²/(2(1 − 2aΣ)) − (1 − p)/2 ln(1 − 2aΣ) − p/2 ln(1 − 2wΣ) − p g ] / (1 − p)
//! ```
//!
//! with `Σ = Σ(t)` from the Riccati path. The `Σb²` term carries the factor
//! `1/2` of the Gaussian moment identity; without it `C` does not solve its
//! ODE. The uncorrected variant is exposed as [`c_as_printed`] so the
//! discrepancy can be measured.

use serde::Serialize;

use super::aux::{AuxOdeSolutions, AuxValues};
use crate::error::{Error, Result};
use crate::filtering::RiccatiPath;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Abc {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// `1 − 2xΣ` with the convention `0/0 = 0` (factor 1 when both vanish).
#[inline]
fn factor(x: f64, sigma: f64) -> f64 {
    if x.abs() < 1e-14 && sigma.abs() < 1e-14 {
        1.0
    } else {
        1.0 - 2.0 * x * sigma
    }
}

/// Maps auxiliary values and `Σ(t)` to `(A, B, C)`.
pub fn abc_from_values(v: &AuxValues, sigma: f64, p: f64) -> Result<Abc> {
    let fa = factor(v.a, sigma);
    let fw = factor(v.w, sigma);
    if !(fa > 0.0) || !(fw > 0.0) {
        return Err(Error::Internal(format!(
            "nonpositive log argument: 1-2a*sigma={fa}, 1-2w*sigma={fw}"
        )));
    }
    let one_p = 1.0 - p;
    Ok(Abc {
        a: v.a / (one_p * fa),
        b: v.b / (one_p * fa),
        c: (v.l + sigma * v.b * v.b / (2.0 * fa)
            - 0.5 * one_p * fa.ln()
            - 0.5 * p * fw.ln()
            - p * v.g)
            / one_p,
    })
}

/// `C` with the `Σb²` term exactly as originally printed (no factor `1/2`).
pub fn c_as_printed(v: &AuxValues, sigma: f64, p: f64) -> f64 {
    let fa = factor(v.a, sigma);
    let fw = factor(v.w, sigma);
    (v.l + sigma * v.b * v.b / fa - 0.5 * (1.0 - p) * fa.ln() - 0.5 * p * fw.ln() - p * v.g)
        / (1.0 - p)
}

/// `A, B, C` on `start ≤ t ≤ s ≤ T` for one Riccati path.
#[derive(Clone, Debug)]
pub struct AbcCoefficients {
    aux: AuxOdeSolutions,
    riccati: RiccatiPath,
}

impl AbcCoefficients {
    pub fn new(aux: AuxOdeSolutions, riccati: RiccatiPath) -> Self {
        AbcCoefficients { aux, riccati }
    }

    pub fn at(&self, t: f64, s: f64) -> Result<Abc> {
        abc_from_values(&self.aux.at(t, s), self.riccati.sigma(t), self.aux.p())
    }

    pub fn aux(&self) -> &AuxOdeSolutions {
        &self.aux
    }

    pub fn riccati(&self) -> &RiccatiPath {
        &self.riccati
    }
}

/// Residuals of the three coefficient ODEs at `(t, s)`, with `∂_t` taken by
/// second-order differences of step `h` inside `[start, s]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct AbcResidual {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub c_as_printed: f64,
}

pub fn abc_ode_residual(
    coeffs: &AbcCoefficients,
    market: &crate::params::MarketParams,
    t: f64,
    s: f64,
    h: f64,
) -> Result<AbcResidual> {
    use crate::ode::fd_derivative;
    let p = coeffs.aux.p();
    let lo = coeffs.riccati.start();
    let comp =
        |t: f64, pick: fn(&Abc) -> f64| coeffs.at(t, s).map(|v| pick(&v)).unwrap_or(f64::NAN);
    let at = coeffs.at(t, s)?;
    let a_t = fd_derivative(|x| comp(x, |v| v.a), t, h, lo, s);
    let b_t = fd_derivative(|x| comp(x, |v| v.b), t, h, lo, s);
    let c_t = fd_derivative(|x| comp(x, |v| v.c), t, h, lo, s);
    let printed = |x: f64| c_as_printed(&coeffs.aux.at(x, s), coeffs.riccati.sigma(x), p);
    let cp_t = fd_derivative(printed, t, h, lo, s);

    let sig = coeffs.riccati.sigma(t) + market.sigma_s * market.sigma_mu * market.rho;
    let s2 = market.sigma_s * market.sigma_s;
    let drift = -market.lambda + p * sig / (s2 * (1.0 - p));
    let quad = 2.0 * sig * sig / s2;
    let lm = market.lambda * market.mu_bar;
    let res_c = |c_t: f64| c_t + lm * at.b + sig * sig / (2.0 * s2) * (at.b * at.b + 2.0 * at.a);
    Ok(AbcResidual {
        a: a_t + p / (2.0 * (1.0 - p) * (1.0 - p) * s2) + 2.0 * drift * at.a + quad * at.a * at.a,
        b: b_t + drift * at.b + 2.0 * lm * at.a + quad * at.a * at.b,
        c: res_c(c_t),
        c_as_printed: res_c(cp_t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelConfig;

    fn coeffs(start: f64) -> (ModelConfig, AbcCoefficients) {
        let cfg = ModelConfig::figure1(0.25);
        let aux = AuxOdeSolutions::new(&cfg).unwrap();
        let ric = RiccatiPath::new(&cfg.market, start);
        (cfg, AbcCoefficients::new(aux, ric))
    }

    #[test]
    fn zero_variance_reduces_to_aux() {
        let (cfg, c) = coeffs(1.0);
        let p = cfg.pref.p;
        let v = c.aux().at(1.0, 4.0);
        let abc = c.at(1.0, 4.0).unwrap();
        assert!((abc.a - v.a / (1.0 - p)).abs() < 1e-16);
        assert!((abc.b - v.b / (1.0 - p)).abs() < 1e-16);
        assert!((abc.c - (v.l - p * v.g) / (1.0 - p)).abs() < 1e-15);
    }

    #[test]
    fn terminal_zero_and_signs() {
        let (_, c) = coeffs(0.0);
        assert_eq!(c.at(5.0, 5.0).unwrap(), Abc::default());
        for t in [0.0, 2.0, 7.0] {
            for s in [t + 0.5, 12.5] {
                let abc = c.at(t, s).unwrap();
                assert!(abc.a <= 0.0);
                let v = c.aux().at(t, s);
                let sig = c.riccati().sigma(t);
                if sig > 0.0 {
                    assert!(1.0 - 2.0 * v.a * sig > 1.0);
                    assert!(1.0 - 2.0 * v.w * sig > 1.0);
                }
            }
        }
    }

    #[test]
    fn residuals_small_and_printed_form_is_off() {
        let (cfg, c) = coeffs(0.0);
        let r = abc_ode_residual(&c, &cfg.market, 3.0, 10.0, 1e-5).unwrap();
        assert!(
            r.a.abs() < 1e-8 && r.b.abs() < 1e-8 && r.c.abs() < 1e-8,
            "{r:?}"
        );
        assert!(r.c_as_printed.abs() > 1e3 * r.c.abs().max(1e-9), "{r:?}");
    }
}
