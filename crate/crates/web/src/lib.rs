//! Browser bindings for the habit-entry solver.
//!
//! Every entry point takes the model configuration as JSON (an empty string
//! selects the reference parameter set) and returns a JSON string:
//!
//! * [`interior_value`]: closed-form post-entry value and policies.
//! * [`filter_variance`]: the filter variance curve `Σ̂(t)` after entry.
//! * [`solve_entry`]: a coarse obstacle solve with its free boundary.

use habit_entry::filtering::RiccatiPath;
use habit_entry::interior::InteriorValue;
use habit_entry::vi::{auto_grid, extract_boundary, solve_vi, BoundaryRecord, Scheme};
use habit_entry::{Error, ModelConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest grid accepted from the page, in nodes.
pub const MAX_NODES: usize = 200_000;

fn config(json: &str) -> Result<ModelConfig, Error> {
    let c = if json.trim().is_empty() {
        ModelConfig::figure1(0.25)
    } else {
        ModelConfig::from_json(json)?
    };
    c.validated()?;
    Ok(c)
}

fn to_json(value: &impl Serialize) -> Result<String, Error> {
    Ok(serde_json::to_string(value)?)
}

/// Closed-form value at `(t, x, z, η)` with the filter started at `t`.
pub fn interior_value_json(
    config_json: &str,
    t: f64,
    x: f64,
    z: f64,
    eta: f64,
) -> Result<String, Error> {
    let c = config(config_json)?;
    let iv = InteriorValue::new(&c, t)?;
    to_json(&iv.evaluate(t, x, z, eta)?)
}

#[derive(Serialize)]
struct VarianceCurve {
    start: f64,
    stationary: f64,
    t: Vec<f64>,
    sigma: Vec<f64>,
}

/// `Σ̂` on `points` equally spaced times from `start` to the horizon.
pub fn filter_variance_json(config_json: &str, start: f64, points: usize) -> Result<String, Error> {
    let c = config(config_json)?;
    let horizon = c.horizon();
    if !(0.0..horizon).contains(&start) {
        return Err(Error::TimeOutOfRange {
            t: start,
            lo: 0.0,
            hi: horizon,
        });
    }
    let path = RiccatiPath::from_config(&c, start);
    let points = points.max(2);
    let t: Vec<f64> = (0..points)
        .map(|k| start + (horizon - start) * k as f64 / (points - 1) as f64)
        .collect();
    let sigma = t.iter().map(|&s| path.sigma(s)).collect();
    to_json(&VarianceCurve {
        start,
        stationary: path.stationary(),
        t,
        sigma,
    })
}

#[derive(Serialize)]
struct EntrySolve {
    v0: f64,
    mu0: f64,
    tol_gap: f64,
    complementarity_residual: f64,
    psor_iterations: usize,
    t: Vec<f64>,
    eta: Vec<f64>,
    /// Row-major `n_t × n_eta` obstacle `Ψ(t, η)`.
    obstacle: Vec<f64>,
    /// Row-major continuation flags.
    continuation: Vec<bool>,
    boundary: Vec<BoundaryRecord>,
}

/// Coarse obstacle solve on an automatically sized drift domain.
pub fn solve_entry_json(config_json: &str, n_t: usize, n_eta: usize) -> Result<String, Error> {
    let c = config(config_json)?;
    if n_t.saturating_mul(n_eta) > MAX_NODES {
        return Err(Error::Grid(format!("more than {MAX_NODES} nodes")));
    }
    let (grid, obstacle) = auto_grid(&c, n_t, n_eta)?;
    let sol = solve_vi(&c.market, &grid, &obstacle, Scheme::default())?;
    let continuation = (0..grid.n_t())
        .flat_map(|i| (0..grid.n_eta()).map(move |j| (i, j)))
        .map(|(i, j)| sol.in_continuation(i, j))
        .collect();
    to_json(&EntrySolve {
        v0: sol.initial_value(c.market.mu0),
        mu0: c.market.mu0,
        tol_gap: sol.tol_gap,
        complementarity_residual: sol.complementarity_residual(),
        psor_iterations: sol.total_iterations(),
        t: grid.t_nodes.clone(),
        eta: grid.eta_nodes.clone(),
        obstacle: sol.obstacle.values.clone(),
        continuation,
        boundary: extract_boundary(&sol),
    })
}

fn js(result: Result<String, Error>) -> Result<String, JsError> {
    result.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn interior_value(
    config_json: &str,
    t: f64,
    x: f64,
    z: f64,
    eta: f64,
) -> Result<String, JsError> {
    js(interior_value_json(config_json, t, x, z, eta))
}

#[wasm_bindgen]
pub fn filter_variance(config_json: &str, start: f64, points: usize) -> Result<String, JsError> {
    js(filter_variance_json(config_json, start, points))
}

#[wasm_bindgen]
pub fn solve_entry(config_json: &str, n_t: usize, n_eta: usize) -> Result<String, JsError> {
    js(solve_entry_json(config_json, n_t, n_eta))
}

/// The reference configuration with habit persistence `delta`, as JSON.
#[wasm_bindgen]
pub fn default_config(delta: f64) -> String {
    ModelConfig::figure1(delta).to_json()
}
