//! Post-entry simulation under the feedback policies.
//!
//! Per step `h`, from the left end point:
//!
//! ```text
//! dŴ = ((μ − μ̂)h + σ_S ΔW)/σ_S
//! X  += (π*μ̂ − c*)h + σ_S π* dŴ
//! Z  += (δc* − αZ)h
//! μ̂  += −λ(μ̂ − μ̄)h + (Σ + σ_Sσ_μρ)/σ_S dŴ
//! U  += h (c* − Z)^p / p
//! ```
//!
//! The true drift uses the exact OU transition. Every path is run at step
//! `h` and, on the same Brownian increments, at step `2h`, so the change of
//! the estimate under step halving is measured with common random numbers.

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::drift::{map_samples, steps, PathConfig};
use super::rng::{normal, path_rng, OuTransition};
use super::stats::{Accumulator, Estimate};
use crate::error::{Error, Result};
use crate::interior::{InteriorValue, NTable};
use crate::params::ModelConfig;
use crate::vi::truncation_half_width;

/// Fraction of paths allowed to cross the subsistence floor.
pub const MAX_FLAGGED_FRACTION: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stage2Start {
    pub t: f64,
    pub x: f64,
    pub z: f64,
    pub mu: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathRecord {
    pub tau: f64,
    pub mu_tau: f64,
    pub reward: f64,
    pub utility: f64,
    pub min_surplus: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Stage2Report {
    /// Closed-form value at the start.
    pub closed_form: f64,
    /// Realized utility at step `dt`.
    pub fine: Estimate,
    /// Realized utility at step `2dt` on the same increments.
    pub coarse: Estimate,
    /// Paired difference fine − coarse.
    pub step_effect: Estimate,
    pub dt: f64,
    pub n_paths: usize,
    pub flagged: usize,
    /// Steps with `c* ≤ Z` over all paths (expected zero).
    pub consumption_below_habit: usize,
    pub min_surplus: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<PathRecord>>,
}

impl Stage2Report {
    /// `|fine − V̂| ≤ 3 stderr + |fine − coarse|`.
    pub fn consistent(&self) -> bool {
        self.fine
            .within(self.closed_form, 3.0, self.step_effect.mean.abs())
    }
}

/// Per-step deterministic coefficients.
struct StepCoefficients {
    t: Vec<f64>,
    m: Vec<f64>,
    /// `ln(1 + δm)/(1 − p)`.
    habit_log: Vec<f64>,
    /// `Σ̂ + σ_Sσ_μρ`.
    hedge: Vec<f64>,
    alpha: Vec<f64>,
    delta: Vec<f64>,
}

/// Policy evaluation and Euler stepping from a fixed start time.
pub(crate) struct Engine<'a> {
    config: &'a ModelConfig,
    iv: &'a InteriorValue,
    table: &'a NTable,
    coeff: StepCoefficients,
    tr: OuTransition,
    /// Fine step count (even).
    pub n: usize,
    pub h: f64,
}

#[derive(Clone, Copy)]
pub(crate) struct PathState {
    pub x: f64,
    pub z: f64,
    pub mu_hat: f64,
    pub utility: f64,
    pub min_surplus: f64,
    pub flagged: bool,
    pub below_habit: usize,
}

impl PathState {
    pub fn new(start: &Stage2Start) -> Self {
        PathState {
            x: start.x,
            z: start.z,
            mu_hat: start.mu,
            utility: 0.0,
            min_surplus: f64::INFINITY,
            flagged: false,
            below_habit: 0,
        }
    }
}

impl<'a> Engine<'a> {
    pub fn new(
        config: &'a ModelConfig,
        iv: &'a InteriorValue,
        table: &'a NTable,
        t0: f64,
        dt: f64,
    ) -> Self {
        let mk = &config.market;
        let (n, h) = steps(config.horizon() - t0, dt, true);
        let p = config.pref.p;
        let msub = iv.subsistence();
        let t: Vec<f64> = (0..n).map(|k| t0 + h * k as f64).collect();
        let coeff = StepCoefficients {
            m: t.iter().map(|&s| msub.value(s)).collect(),
            habit_log: t
                .iter()
                .map(|&s| (1.0 + config.habit.delta.at(s) * msub.value(s)).ln() / (1.0 - p))
                .collect(),
            hedge: t
                .iter()
                .map(|&s| iv.riccati().sigma(s) + mk.sigma_s * mk.sigma_mu * mk.rho)
                .collect(),
            alpha: t.iter().map(|&s| config.habit.alpha.at(s)).collect(),
            delta: t.iter().map(|&s| config.habit.delta.at(s)).collect(),
            t,
        };
        Engine {
            config,
            iv,
            table,
            coeff,
            tr: OuTransition::new(mk, h),
            n,
            h,
        }
    }

    /// Advances `state` by `h` from fine-grid index `k` with true drift `mu`
    /// and stock increment `dw`.
    #[inline]
    fn advance(&self, state: &mut PathState, k: usize, h: f64, mu: f64, dw: f64) {
        if state.flagged {
            return;
        }
        let mk = &self.config.market;
        let p = self.config.pref.p;
        let c = &self.coeff;
        let y = state.x - c.m[k] * state.z;
        state.min_surplus = state.min_surplus.min(y);
        if !(y > 0.0) {
            state.flagged = true;
            return;
        }
        let n = self.table.eval(self.iv, c.t[k], state.mu_hat);
        let excess = y * (-c.habit_log[k] - n.ln_n).exp();
        if !(excess > 0.0) {
            state.below_habit += 1;
        }
        let cons = state.z + excess;
        let s2 = mk.sigma_s * mk.sigma_s;
        let pi = (state.mu_hat / ((1.0 - p) * s2) + c.hedge[k] / s2 * n.eta_ratio) * y;
        state.utility += h * excess.powf(p) / p;
        let innovation = ((mu - state.mu_hat) * h + mk.sigma_s * dw) / mk.sigma_s;
        state.x += (pi * state.mu_hat - cons) * h + mk.sigma_s * pi * innovation;
        state.z += (c.delta[k] * cons - c.alpha[k] * state.z) * h;
        state.mu_hat +=
            -mk.lambda * (state.mu_hat - mk.mu_bar) * h + c.hedge[k] / mk.sigma_s * innovation;
    }

    /// One path at the fine step; `sign = −1` negates every normal.
    pub fn run_path(&self, start: &Stage2Start, rng: &mut ChaCha8Rng, sign: f64) -> PathState {
        let mut state = PathState::new(start);
        let mut mu = start.mu;
        for k in 0..self.n {
            let z1 = sign * normal(rng);
            let z2 = sign * normal(rng);
            let (mu_next, dw) = self.tr.step(mu, z1, z2);
            self.advance(&mut state, k, self.h, mu, dw);
            mu = mu_next;
        }
        state
    }

    /// Fine and coarse (step `2h`) runs of an antithetic group on shared increments.
    fn run_pair(
        &self,
        start: &Stage2Start,
        rng: &mut ChaCha8Rng,
        per: usize,
    ) -> ([PathState; 2], [PathState; 2]) {
        let mut fine = [PathState::new(start); 2];
        let mut coarse = [PathState::new(start); 2];
        let mut mu = [start.mu; 2];
        let mut mu_even = [start.mu; 2];
        let mut dw_prev = [0.0; 2];
        for k in 0..self.n {
            let z1 = normal(rng);
            let z2 = normal(rng);
            for q in 0..per {
                let sign = if q == 0 { 1.0 } else { -1.0 };
                let (mu_next, dw) = self.tr.step(mu[q], sign * z1, sign * z2);
                self.advance(&mut fine[q], k, self.h, mu[q], dw);
                if k % 2 == 0 {
                    mu_even[q] = mu[q];
                    dw_prev[q] = dw;
                } else {
                    self.advance(
                        &mut coarse[q],
                        k - 1,
                        2.0 * self.h,
                        mu_even[q],
                        dw_prev[q] + dw,
                    );
                }
                mu[q] = mu_next;
            }
        }
        (fine, coarse)
    }
}

/// Table used for policy lookups from `start`.
pub fn stage2_table(
    config: &ModelConfig,
    iv: &InteriorValue,
    start: f64,
    t_nodes: usize,
) -> NTable {
    let w = 1.5 * truncation_half_width(&config.market);
    let mu_bar = config.market.mu_bar;
    NTable::build(iv, start, t_nodes.max(4), mu_bar - w, mu_bar + w, 241)
}

pub(crate) fn default_t_nodes(length: f64) -> usize {
    ((length / 0.0125).ceil() as usize + 1).clamp(16, 1001)
}

/// Simulates realized post-entry utility from `start` and compares with the
/// closed-form value.
pub fn run_stage2(
    config: &ModelConfig,
    start: Stage2Start,
    pathcfg: &PathConfig,
) -> Result<Stage2Report> {
    run_stage2_with(config, start, pathcfg, false)
}

pub fn run_stage2_with(
    config: &ModelConfig,
    start: Stage2Start,
    pathcfg: &PathConfig,
    keep_paths: bool,
) -> Result<Stage2Report> {
    pathcfg.check()?;
    let iv = InteriorValue::new(config, start.t)?;
    let closed_form = iv.value(start.t, start.x, start.z, start.mu)?;
    let length = config.horizon() - start.t;
    if length <= 0.0 {
        let zero = Estimate {
            mean: 0.0,
            stderr: 0.0,
            n: pathcfg.samples() as u64,
        };
        return Ok(Stage2Report {
            closed_form,
            fine: zero,
            coarse: zero,
            step_effect: zero,
            dt: pathcfg.dt,
            n_paths: pathcfg.n_paths,
            flagged: 0,
            consumption_below_habit: 0,
            min_surplus: start.x - iv.subsistence().value(start.t) * start.z,
            records: keep_paths.then(Vec::new),
        });
    }
    let table = stage2_table(config, &iv, start.t, default_t_nodes(length));
    stage2_on_table(config, &iv, &table, start, pathcfg, closed_form, keep_paths)
}

pub(crate) fn stage2_on_table(
    config: &ModelConfig,
    iv: &InteriorValue,
    table: &NTable,
    start: Stage2Start,
    pathcfg: &PathConfig,
    closed_form: f64,
    keep_paths: bool,
) -> Result<Stage2Report> {
    let engine = Engine::new(config, iv, table, start.t, pathcfg.dt);
    let per = pathcfg.paths_per_sample();
    let h = engine.h;
    let results = map_samples(pathcfg.samples(), |s| {
        let mut rng = path_rng(pathcfg.seed, s as u64);
        engine.run_pair(&start, &mut rng, per)
    });

    let mut acc_fine = Accumulator::default();
    let mut acc_coarse = Accumulator::default();
    let mut acc_diff = Accumulator::default();
    let mut flagged = 0;
    let mut below = 0;
    let mut min_surplus = f64::INFINITY;
    let mut records = keep_paths.then(|| Vec::with_capacity(pathcfg.n_paths));
    for (fine, coarse) in &results {
        let uf = fine[..per].iter().map(|s| s.utility).sum::<f64>() / per as f64;
        let uc = coarse[..per].iter().map(|s| s.utility).sum::<f64>() / per as f64;
        acc_fine.push(uf);
        acc_coarse.push(uc);
        acc_diff.push(uf - uc);
        for s in &fine[..per] {
            flagged += s.flagged as usize;
            below += s.below_habit;
            min_surplus = min_surplus.min(s.min_surplus);
            if let Some(r) = records.as_mut() {
                r.push(PathRecord {
                    tau: start.t,
                    mu_tau: start.mu,
                    reward: closed_form,
                    utility: s.utility,
                    min_surplus: s.min_surplus,
                    flagged: s.flagged,
                });
            }
        }
    }
    let total = results.len() * per;
    if flagged as f64 > MAX_FLAGGED_FRACTION * total as f64 {
        return Err(Error::Simulation(format!(
            "{flagged} of {total} paths crossed the subsistence floor; step {h} too coarse"
        )));
    }
    Ok(Stage2Report {
        closed_form,
        fine: acc_fine.estimate(),
        coarse: acc_coarse.estimate(),
        step_effect: acc_diff.estimate(),
        dt: h,
        n_paths: total,
        flagged,
        consumption_below_habit: below,
        min_surplus,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_at_horizon_is_zero() {
        let c = ModelConfig::figure1(0.25);
        let start = Stage2Start {
            t: 12.5,
            x: 1e6 - 5000.0 * 12.5,
            z: 0.5,
            mu: 0.25,
        };
        let cfg = PathConfig {
            n_paths: 10,
            dt: 0.01,
            seed: 1,
            antithetic: true,
        };
        let r = run_stage2(&c, start, &cfg).unwrap();
        assert_eq!(r.fine.mean, 0.0);
        assert_eq!(r.closed_form, 0.0);
    }

    #[test]
    fn short_horizon_matches_closed_form() {
        let c = ModelConfig::figure1(0.25);
        let start = Stage2Start {
            t: 11.5,
            x: 1e6 - 5000.0 * 11.5,
            z: 0.5,
            mu: 0.25,
        };
        let cfg = PathConfig {
            n_paths: 2000,
            dt: 2e-3,
            seed: 3,
            antithetic: true,
        };
        let r = run_stage2(&c, start, &cfg).unwrap();
        assert_eq!(r.flagged, 0);
        assert_eq!(r.consumption_below_habit, 0);
        assert!(r.min_surplus > 0.0);
        assert!(r.consistent(), "{r:?}");
    }

    #[test]
    fn seeded_determinism() {
        let c = ModelConfig::figure1(0.25);
        let start = Stage2Start {
            t: 12.0,
            x: 1e6 - 5000.0 * 12.0,
            z: 0.5,
            mu: 0.4,
        };
        let cfg = PathConfig {
            n_paths: 64,
            dt: 5e-3,
            seed: 9,
            antithetic: true,
        };
        let a = run_stage2(&c, start, &cfg).unwrap();
        let b = run_stage2(&c, start, &cfg).unwrap();
        assert_eq!(a.fine.mean.to_bits(), b.fine.mean.to_bits());
        assert_eq!(a.fine.stderr.to_bits(), b.fine.stderr.to_bits());
    }
}
