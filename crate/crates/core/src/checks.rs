//! Residual suites: closed forms against independent ODE integration and
//! finite differences.
//!
//! | check | compared | measure |
//! |---|---|---|
//! | `aux_vs_rk4` | `a, b, l, w, g` vs RK4 on a `(t, s)` grid | `|x − y|/|y|` |
//! | `riccati_explicit_vs_rk4` | explicit `Σ̂` vs RK4 | `|x − y|/(1 + y)` |
//! | `riccati_path_vs_rk4` | cached path vs RK4 | `|x − y|/(1 + y)` |
//! | `riccati_unit_correlation` | `Σ̂` with `ρ = ±1` | `max Σ̂` |
//! | `abc_residual_{a,b,c}` | ODE residuals of `A, B, C` | absolute |
//! | `c_as_printed_residual` | residual of the printed `C` | absolute, reported only |
//! | `hjb_residual` | HJB with optimizers substituted | `|residual|/Σ|terms|` |

use std::io::{self, Write};
use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::filtering::{riccati_ode_oracle, RiccatiPath};
use crate::interior::{
    abc_ode_residual, aux_ode_oracle, AbcCoefficients, AuxOdeSolutions, InteriorValue,
};
use crate::params::ModelConfig;
use crate::report::fmt_f64;

/// Default grid for the auxiliary and coefficient suites.
pub const SUITE_GRID: usize = 50;
/// Default number of HJB sample points.
pub const HJB_POINTS: usize = 100;

pub const AUX_TOL: f64 = 1e-6;
pub const RICCATI_TOL: f64 = 1e-6;
pub const ABC_TOL: f64 = 1e-4;
pub const HJB_TOL: f64 = 1e-3;

/// RK4 step bound for the oracles.
const ORACLE_STEP: f64 = 2.5e-3;

#[derive(Clone, Debug, Serialize)]
pub struct CheckRow {
    pub name: &'static str,
    pub max_error: f64,
    /// `None` for rows that are reported but not judged.
    pub tolerance: Option<f64>,
    pub points: usize,
    pub seconds: f64,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.tolerance.is_none_or(|tol| self.max_error <= tol)
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CheckSuite {
    pub rows: Vec<CheckRow>,
}

impl CheckSuite {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(CheckRow::passed)
    }

    pub fn row(&self, name: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Rows `check,max_error,tolerance,points,seconds,status`.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "check,max_error,tolerance,points,seconds,status")?;
        for r in &self.rows {
            let status = match (r.tolerance, r.passed()) {
                (None, _) => "info",
                (Some(_), true) => "pass",
                (Some(_), false) => "fail",
            };
            writeln!(
                w,
                "{},{},{},{},{:.3},{}",
                r.name,
                fmt_f64(r.max_error),
                r.tolerance.map(fmt_f64).unwrap_or_default(),
                r.points,
                r.seconds,
                status
            )?;
        }
        Ok(())
    }
}

fn row(
    name: &'static str,
    max_error: f64,
    tolerance: Option<f64>,
    points: usize,
    since: Instant,
) -> CheckRow {
    CheckRow {
        name,
        max_error,
        tolerance,
        points,
        seconds: since.elapsed().as_secs_f64(),
    }
}

fn nodes(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64)
}

/// Closed-form auxiliary functions against RK4 on an `n × n` grid of `t ≤ s`.
pub fn aux_suite(config: &ModelConfig, n: usize, tol: f64) -> Result<CheckRow> {
    let clock = Instant::now();
    let aux = AuxOdeSolutions::new(config)?;
    let horizon = config.horizon();
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for t in nodes(0.0, horizon, n) {
        for s in nodes(0.0, horizon, n).filter(|&s| s > t) {
            let exact = aux.at(t, s);
            let steps = ((s - t) / ORACLE_STEP).ceil().max(1.0) as usize;
            let ode = aux_ode_oracle(&aux, t, s, steps);
            for (x, y) in exact.to_array().iter().zip(ode.to_array()) {
                let err = if y == 0.0 {
                    x.abs()
                } else {
                    (x - y).abs() / y.abs()
                };
                worst = worst.max(err);
            }
            points += 1;
        }
    }
    Ok(row("aux_vs_rk4", worst, Some(tol), points, clock))
}

/// Explicit and cached `Σ̂` against RK4, and `Σ̂ ≡ 0` for `ρ = ±1`.
pub fn riccati_suite(config: &ModelConfig, n: usize, tol: f64) -> Result<Vec<CheckRow>> {
    let horizon = config.horizon();
    let mut rows = Vec::new();

    let clock = Instant::now();
    let path = RiccatiPath::new(&config.market, 0.0);
    let mut worst_explicit: Option<f64> = None;
    let mut worst_path: f64 = 0.0;
    for t in nodes(0.0, horizon, n) {
        let oracle = riccati_ode_oracle(config, 0.0, t, ORACLE_STEP);
        if let Some(x) = path.sigma_explicit(t) {
            let e = (x - oracle).abs() / (1.0 + oracle);
            worst_explicit = Some(worst_explicit.unwrap_or(0.0).max(e));
        }
        worst_path = worst_path.max((path.sigma(t) - oracle).abs() / (1.0 + oracle));
    }
    if let Some(w) = worst_explicit {
        rows.push(row("riccati_explicit_vs_rk4", w, Some(tol), n, clock));
    }
    let clock = Instant::now();
    rows.push(row("riccati_path_vs_rk4", worst_path, Some(tol), n, clock));

    let clock = Instant::now();
    let mut worst_unit: f64 = 0.0;
    for rho in [-1.0, 1.0] {
        let mut c = config.clone();
        c.market.rho = rho;
        let p = RiccatiPath::new(&c.market, 0.0);
        for t in nodes(0.0, horizon, n) {
            worst_unit = worst_unit.max(p.sigma(t).abs());
            if let Some(x) = p.sigma_explicit(t) {
                worst_unit = worst_unit.max(x.abs());
            }
        }
    }
    rows.push(row(
        "riccati_unit_correlation",
        worst_unit,
        Some(tol),
        2 * n,
        clock,
    ));
    Ok(rows)
}

/// ODE residuals of `A, B, C` (and the printed `C`) on an `n × n` grid.
pub fn abc_suite(config: &ModelConfig, n: usize, tol: f64) -> Result<Vec<CheckRow>> {
    let clock = Instant::now();
    let coeffs = AbcCoefficients::new(
        AuxOdeSolutions::new(config)?,
        RiccatiPath::new(&config.market, 0.0),
    );
    let horizon = config.horizon();
    let mut worst = [0.0f64; 4];
    let mut points = 0;
    for t in nodes(0.0, horizon, n) {
        for s in nodes(0.0, horizon, n).filter(|&s| s > t) {
            let h = 1e-5 * (1.0 + t);
            let r = abc_ode_residual(&coeffs, &config.market, t, s, h)?;
            for (w, x) in worst.iter_mut().zip([r.a, r.b, r.c, r.c_as_printed]) {
                *w = w.max(x.abs());
            }
            points += 1;
        }
    }
    Ok(vec![
        row("abc_residual_a", worst[0], Some(tol), points, clock),
        row("abc_residual_b", worst[1], Some(tol), points, clock),
        row("abc_residual_c", worst[2], Some(tol), points, clock),
        row("c_as_printed_residual", worst[3], None, points, clock),
    ])
}

/// HJB residual with optimizers substituted at `points` interior samples.
pub fn hjb_suite(config: &ModelConfig, points: usize, tol: f64) -> Result<CheckRow> {
    let clock = Instant::now();
    let iv = InteriorValue::new(config, 0.0)?;
    let horizon = config.horizon();
    let m = &config.market;
    let z = config.habit.z0.max(0.1);
    let mut worst: f64 = 0.0;
    for k in 0..points {
        // deterministic low-discrepancy samples
        let u = (k as f64 + 0.5) / points as f64;
        let v = (k as f64 * 0.618_033_988_749_895).fract();
        let w = (k as f64 * 0.754_877_666_246_693).fract();
        let t = 0.95 * horizon * u;
        let eta = m.mu_bar + 3.0 * (2.0 * v - 1.0);
        let floor = iv.subsistence().value(t) * z;
        let x = floor + 10f64.powf(2.0 + 4.0 * w);
        let r = iv.hjb_residual(t, x, z, eta)?;
        worst = worst.max(r.relative_to_terms);
    }
    Ok(row("hjb_residual", worst, Some(tol), points, clock))
}

/// Every suite with default sizes; `tol` overrides all judged tolerances.
pub fn check_odes(config: &ModelConfig, tol: Option<f64>) -> Result<CheckSuite> {
    let mut rows = vec![aux_suite(config, SUITE_GRID, tol.unwrap_or(AUX_TOL))?];
    rows.extend(riccati_suite(
        config,
        SUITE_GRID,
        tol.unwrap_or(RICCATI_TOL),
    )?);
    rows.extend(abc_suite(config, SUITE_GRID, tol.unwrap_or(ABC_TOL))?);
    rows.push(hjb_suite(config, HJB_POINTS, tol.unwrap_or(HJB_TOL))?);
    Ok(CheckSuite { rows })
}
