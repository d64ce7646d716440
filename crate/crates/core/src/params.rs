//! Model constants, admissibility checks and derived scalars.
//!
//! A [`ModelConfig`] bundles the market (stock and Ornstein-Uhlenbeck drift),
//! habit-formation, preference and information-cost constants. Configurations
//! are read from JSON whose keys match the struct fields exactly; unknown keys
//! are rejected so that a typo never silently falls back to a default.
//!
//! Validation is report-style: [`validate`] never fails, it lists every
//! violated invariant. Downstream solvers refuse configs whose report
//! contains an [`Severity::Error`] entry.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interior::SubsistenceCost;

/// Deterministic nonnegative rate of time, either constant or piecewise constant.
///
/// JSON form: a bare number, or `{"breaks": [t1, t2, ..], "values": [v0, v1, ..]}`
/// where `values[i]` applies on `[breaks[i-1], breaks[i])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rate {
    Constant(f64),
    Piecewise(PiecewiseRate),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseRate {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl Rate {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Rate::Constant(v) => *v,
            Rate::Piecewise(pw) => {
                let idx = pw.breaks.partition_point(|&b| b <= t);
                pw.values[idx.min(pw.values.len() - 1)]
            }
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Rate::Constant(v) => Some(*v),
            Rate::Piecewise(pw) if pw.values.len() == 1 => Some(pw.values[0]),
            Rate::Piecewise(_) => None,
        }
    }

    pub fn breaks(&self) -> &[f64] {
        match self {
            Rate::Constant(_) => &[],
            Rate::Piecewise(pw) => &pw.breaks,
        }
    }

    fn pieces(&self) -> Vec<f64> {
        match self {
            Rate::Constant(v) => vec![*v],
            Rate::Piecewise(pw) => pw.values.clone(),
        }
    }
}

impl From<f64> for Rate {
    fn from(v: f64) -> Self {
        Rate::Constant(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    /// Mean-reversion speed of the drift (1/time).
    pub lambda: f64,
    /// Long-run drift level.
    pub mu_bar: f64,
    /// Stock volatility.
    pub sigma_s: f64,
    /// Drift volatility.
    pub sigma_mu: f64,
    /// Correlation between the stock and drift Brownian motions.
    pub rho: f64,
    /// Horizon in years.
    #[serde(rename = "horizon_T")]
    pub horizon_t: f64,
    /// Drift observed at time zero.
    pub mu0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HabitParams {
    /// Persistence discount of the habit level.
    pub alpha: Rate,
    /// Intensity of past consumption in the habit level.
    pub delta: Rate,
    /// Habit level at entry.
    pub z0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceParams {
    /// Power-utility exponent, strictly negative.
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    /// Information cost per unit time while waiting.
    pub kappa: f64,
    /// Initial wealth.
    pub x0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub market: MarketParams,
    pub habit: HabitParams,
    pub pref: PreferenceParams,
    pub cost: CostParams,
}

impl ModelConfig {
    /// The numerical-example parameter set (T=12.5, p=-1, ...) with the given
    /// habit intensity. The initial drift is placed at the long-run level.
    pub fn figure1(delta: f64) -> Self {
        ModelConfig {
            market: MarketParams {
                lambda: 0.1,
                mu_bar: 0.25,
                sigma_s: 0.5,
                sigma_mu: 0.4,
                rho: 0.2,
                horizon_t: 12.5,
                mu0: 0.25,
            },
            habit: HabitParams {
                alpha: Rate::Constant(0.04),
                delta: Rate::Constant(delta),
                z0: 0.5,
            },
            pref: PreferenceParams { p: -1.0 },
            cost: CostParams {
                kappa: 5000.0,
                x0: 1.0e6,
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.market.horizon_t
    }

    /// Wealth left after paying the information cost up to `t`.
    #[inline]
    pub fn wealth_after_cost(&self, t: f64) -> f64 {
        self.cost.x0 - self.cost.kappa * t
    }

    /// Validates and returns `self`, or the report as an error.
    pub fn validated(&self) -> Result<&Self> {
        let report = validate(self);
        if report.is_valid() {
            Ok(self)
        } else {
            Err(Error::InvalidConfig(report))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Severity {
    Error,
    /// Accepted by the solvers but numerically special (e.g. deterministic drift).
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub field: &'static str,
    pub message: String,
    pub time: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn is_degenerate(&self) -> bool {
        self.issues
            .iter()
            .any(|i| i.severity == Severity::Degenerate)
    }

    fn error(&mut self, field: &'static str, message: impl Into<String>) {
        self.issues.push(Issue {
            severity: Severity::Error,
            field,
            message: message.into(),
            time: None,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "valid");
        }
        let parts: Vec<String> = self
            .issues
            .iter()
            .map(|i| match i.time {
                Some(t) => format!("{}: {} (t={t})", i.field, i.message),
                None => format!("{}: {}", i.field, i.message),
            })
            .collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Checks every parameter invariant and the wealth-habit budget feasibility
/// `x0 - kappa t > z0 m(t)` on `[0, T]`.
pub fn validate(config: &ModelConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let m = &config.market;

    let finite = [
        ("market.lambda", m.lambda),
        ("market.mu_bar", m.mu_bar),
        ("market.sigma_s", m.sigma_s),
        ("market.sigma_mu", m.sigma_mu),
        ("market.rho", m.rho),
        ("market.horizon_T", m.horizon_t),
        ("market.mu0", m.mu0),
        ("habit.z0", config.habit.z0),
        ("pref.p", config.pref.p),
        ("cost.kappa", config.cost.kappa),
        ("cost.x0", config.cost.x0),
    ];
    for (field, v) in finite {
        if !v.is_finite() {
            report.error(field, "must be finite");
        }
    }
    if !report.is_valid() {
        return report;
    }

    if m.sigma_s <= 0.0 {
        report.error("market.sigma_s", "sigma_s must be > 0");
    }
    if m.rho.abs() > 1.0 {
        report.error("market.rho", "|rho| must be <= 1");
    }
    if m.lambda < 0.0 {
        report.error("market.lambda", "lambda must be >= 0");
    }
    if m.horizon_t <= 0.0 {
        report.error("market.horizon_T", "horizon_T must be > 0");
    }
    if m.sigma_mu < 0.0 {
        report.error("market.sigma_mu", "sigma_mu must be >= 0");
    } else if m.sigma_mu == 0.0 {
        report.issues.push(Issue {
            severity: Severity::Degenerate,
            field: "market.sigma_mu",
            message: "degenerate: deterministic drift".into(),
            time: None,
        });
    }
    if config.pref.p >= 0.0 {
        report.error("pref.p", "p must be < 0");
    }
    if config.cost.x0 <= 0.0 {
        report.error("cost.x0", "x0 must be > 0");
    }
    if config.cost.kappa < 0.0 {
        report.error("cost.kappa", "kappa must be >= 0");
    }
    if config.habit.z0 < 0.0 {
        report.error("habit.z0", "z0 must be >= 0");
    }
    check_rate(&mut report, "habit.alpha", &config.habit.alpha, m.horizon_t);
    check_rate(&mut report, "habit.delta", &config.habit.delta, m.horizon_t);

    if report.is_valid() {
        if let Some(t) = budget_violation(config) {
            report.issues.push(Issue {
                severity: Severity::Error,
                field: "cost.x0",
                message: "budget feasibility x0 - kappa t > z0 m(t) violated".into(),
                time: Some(t),
            });
        }
    }
    report
}

fn check_rate(report: &mut ValidationReport, field: &'static str, rate: &Rate, horizon: f64) {
    if let Rate::Piecewise(pw) = rate {
        if pw.values.len() != pw.breaks.len() + 1 {
            report.error(
                field,
                "piecewise rate needs exactly one more value than breaks",
            );
            return;
        }
        if pw.breaks.windows(2).any(|w| w[0] >= w[1]) {
            report.error(field, "piecewise breaks must be strictly increasing");
        }
        if pw.breaks.iter().any(|&b| !(b > 0.0 && b < horizon)) {
            report.error(field, "piecewise breaks must lie inside (0, T)");
        }
    }
    for v in rate.pieces() {
        if !v.is_finite() || v < 0.0 {
            report.error(field, "rate must be finite and >= 0 on [0, T]");
            break;
        }
    }
}

/// Returns a time where the budget constraint fails, if any.
///
/// Both `x0 - kappa t` and `m(t)` are nonincreasing, so on a panel `[ta, tb]`
/// the bound `x0 - kappa tb > z0 m(ta)` certifies the whole panel. Panels that
/// fail the bound are bisected.
fn budget_violation(config: &ModelConfig) -> Option<f64> {
    let horizon = config.horizon();
    let m = SubsistenceCost::new(&config.habit, horizon);
    let z0 = config.habit.z0;
    let surplus = |t: f64| config.wealth_after_cost(t) - z0 * m.value(t);

    let n = 10 * horizon.ceil() as usize + 1;
    let mut nodes: Vec<f64> = (0..n)
        .map(|i| horizon * i as f64 / (n - 1) as f64)
        .collect();
    nodes[0] = 0.0;
    nodes[n - 1] = horizon;

    for &t in &nodes {
        if surplus(t) <= 0.0 {
            return Some(t);
        }
    }
    for w in nodes.windows(2) {
        if let Some(t) = check_panel(config, &m, w[0], w[1], 0) {
            return Some(t);
        }
    }
    None
}

fn check_panel(
    config: &ModelConfig,
    m: &SubsistenceCost,
    ta: f64,
    tb: f64,
    depth: u32,
) -> Option<f64> {
    let z0 = config.habit.z0;
    if config.wealth_after_cost(tb) - z0 * m.value(ta) > 0.0 {
        return None;
    }
    let mid = 0.5 * (ta + tb);
    if config.wealth_after_cost(mid) - z0 * m.value(mid) <= 0.0 {
        return Some(mid);
    }
    if depth >= 30 {
        return None;
    }
    check_panel(config, m, ta, mid, depth + 1)
        .or_else(|| check_panel(config, m, mid, tb, depth + 1))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundedSolution {
    pub delta_value: f64,
    pub satisfied: bool,
}

/// `Δ = λ² − 2λpρσ_μ/((1−p)σ_S) − pσ_μ²/((1−p)σ_S²)`; the auxiliary ODEs have
/// bounded solutions when `Δ > 0`, which always holds for `p < 0`.
pub fn bounded_solution_condition(config: &ModelConfig) -> BoundedSolution {
    let m = &config.market;
    let p = config.pref.p;
    let delta_value = m.lambda * m.lambda
        - 2.0 * m.lambda * p * m.rho * m.sigma_mu / ((1.0 - p) * m.sigma_s)
        - p * m.sigma_mu * m.sigma_mu / ((1.0 - p) * m.sigma_s * m.sigma_s);
    BoundedSolution {
        delta_value,
        satisfied: delta_value > 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure1_is_valid() {
        let report = validate(&ModelConfig::figure1(0.25));
        assert!(report.issues.is_empty(), "{report}");
    }

    #[test]
    fn positive_p_rejected() {
        let mut c = ModelConfig::figure1(0.25);
        c.pref.p = 0.5;
        let report = validate(&c);
        assert!(!report.is_valid());
        assert!(report.errors().any(|i| i.message == "p must be < 0"));
    }

    #[test]
    fn excessive_cost_breaks_budget() {
        let mut c = ModelConfig::figure1(0.25);
        c.cost.kappa = c.cost.x0 / c.market.horizon_t * 2.0;
        let report = validate(&c);
        let issue = report
            .errors()
            .find(|i| i.field == "cost.x0")
            .expect("budget violation");
        let t = issue.time.unwrap();
        assert!(t > 0.0 && t <= c.market.horizon_t);
        // wealth is exhausted at T/2, violation can be no later than that
        assert!(t <= 0.5 * c.market.horizon_t + 1e-12);
    }

    #[test]
    fn zero_sigma_mu_is_flagged_not_rejected() {
        let mut c = ModelConfig::figure1(0.25);
        c.market.sigma_mu = 0.0;
        let report = validate(&c);
        assert!(report.is_valid());
        assert!(report.is_degenerate());
        assert_eq!(report.issues[0].message, "degenerate: deterministic drift");
    }

    #[test]
    fn several_violations_are_all_reported() {
        let mut c = ModelConfig::figure1(0.25);
        c.market.sigma_s = 0.0;
        c.market.rho = 1.5;
        c.cost.x0 = -1.0;
        let report = validate(&c);
        assert_eq!(report.errors().count(), 3);
    }

    #[test]
    fn bounded_condition_at_figure1() {
        // 0.01 + 0.016 + 0.32 by hand
        let b = bounded_solution_condition(&ModelConfig::figure1(0.25));
        assert!((b.delta_value - 0.346).abs() < 1e-15);
        assert!(b.satisfied);
    }

    #[test]
    fn bounded_condition_p_to_zero() {
        let mut c = ModelConfig::figure1(0.25);
        c.pref.p = -1e-12;
        let b = bounded_solution_condition(&c);
        assert!((b.delta_value - 0.01).abs() < 1e-10);
        c.market.lambda = 0.0;
        assert!(bounded_solution_condition(&c).delta_value.abs() < 1e-10);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v: serde_json::Value =
            serde_json::from_str(&ModelConfig::figure1(0.25).to_json()).unwrap();
        v["market"]["lamda"] = serde_json::json!(0.1);
        assert!(ModelConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn piecewise_rate_round_trip() {
        let json = r#"{"market":{"lambda":0.1,"mu_bar":0.25,"sigma_s":0.5,"sigma_mu":0.4,"rho":0.2,"horizon_T":12.5,"mu0":0.25},
            "habit":{"alpha":0.04,"delta":{"breaks":[5.0],"values":[0.2,0.3]},"z0":0.5},
            "pref":{"p":-1.0},"cost":{"kappa":5000.0,"x0":1000000.0}}"#;
        let c = ModelConfig::from_json(json).unwrap();
        assert_eq!(c.habit.delta.at(4.9), 0.2);
        assert_eq!(c.habit.delta.at(5.0), 0.3);
        assert!(validate(&c).is_valid());
        let back = ModelConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn validate_is_pure(p in -5.0f64..-0.01, rho in -1.0f64..1.0, kappa in 0.0f64..1e5) {
                let mut c = ModelConfig::figure1(0.25);
                c.pref.p = p;
                c.market.rho = rho;
                c.cost.kappa = kappa;
                prop_assert_eq!(validate(&c), validate(&c));
                prop_assert!(bounded_solution_condition(&c).satisfied);
            }
        }
    }
}
