//! Entry-time simulation: stage one under full information, then the reward
//! of entering (or a simulated post-entry path).
//!
//! The drift is sampled exactly on the grid `t_k = k·h` and the rule is
//! consulted at grid times only, so `τ` has resolution `h`.

use std::sync::OnceLock;

use serde::Serialize;

use super::drift::{map_samples, steps, PathConfig};
use super::rng::{normal, path_rng, OuTransition};
use super::stage2::{default_t_nodes, stage2_table, Engine, PathRecord, Stage2Start};
use super::stats::{Accumulator, Estimate};
use crate::error::{Error, Result};
use crate::interior::{InteriorValue, NProfile, NTable};
use crate::params::ModelConfig;
use crate::vi::{entry_rule, StoppingRule, VISolution};

/// Stream offset separating nested post-entry paths from stage-one paths.
const NESTED_STREAM: u64 = 1 << 40;

#[derive(Clone, Debug, Serialize)]
pub struct SimBatch {
    /// Estimate of the value at `(0, μ0)`.
    pub estimate: Estimate,
    /// Mean entry time.
    pub mean_tau: f64,
    /// Paths that reached the horizon without entering.
    pub reached_horizon: usize,
    pub n_paths: usize,
    pub dt: f64,
    /// Nested post-entry utility, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nested: Option<Estimate>,
    pub flagged: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<PathRecord>>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CompositeOptions {
    /// Replace the reward by one simulated post-entry path.
    pub nested: bool,
    pub keep_paths: bool,
}

/// Stopping outcome of one path.
#[derive(Clone, Copy, Debug)]
struct Stop {
    k: usize,
    tau: f64,
    mu: f64,
}

/// Runs stage one and returns the stopping outcome of every path
/// (antithetic partners adjacent).
fn stop_paths(
    config: &ModelConfig,
    rule: &StoppingRule,
    pathcfg: &PathConfig,
) -> (Vec<[Stop; 2]>, f64, usize) {
    let horizon = config.horizon();
    let (n, h) = steps(horizon, pathcfg.dt, false);
    let tr = OuTransition::new(&config.market, h);
    let mu0 = config.market.mu0;
    let per = pathcfg.paths_per_sample();
    let stops = map_samples(pathcfg.samples(), |s| {
        let mut rng = path_rng(pathcfg.seed, s as u64);
        let mut out = [Stop {
            k: n,
            tau: horizon,
            mu: mu0,
        }; 2];
        let mut mu = [mu0; 2];
        let mut live = [true, per == 2];
        for k in 0..=n {
            let t = if k == n { horizon } else { h * k as f64 };
            for q in 0..per {
                if live[q] && rule.should_stop(t, mu[q], horizon) {
                    out[q] = Stop {
                        k,
                        tau: t,
                        mu: mu[q],
                    };
                    live[q] = false;
                }
            }
            if !live[0] && !live[1] {
                break;
            }
            let z = normal(&mut rng);
            for (q, m) in mu.iter_mut().enumerate().take(per) {
                let sign = if q == 0 { 1.0 } else { -1.0 };
                *m = tr.step_drift(*m, sign * z);
            }
        }
        out
    });
    (stops, h, n)
}

/// Stopped reward for a generic reward function `reward(k, t, μ)`.
pub fn run_stopping(
    config: &ModelConfig,
    rule: &StoppingRule,
    pathcfg: &PathConfig,
    reward: impl Fn(usize, f64, f64) -> Result<f64> + Sync + Send,
) -> Result<SimBatch> {
    pathcfg.check()?;
    let (stops, h, n) = stop_paths(config, rule, pathcfg);
    let per = pathcfg.paths_per_sample();
    let rewards = map_samples(stops.len(), |s| -> Result<[f64; 2]> {
        let mut r = [0.0; 2];
        for q in 0..per {
            let st = stops[s][q];
            r[q] = reward(st.k, st.tau, st.mu)?;
        }
        Ok(r)
    });
    let mut acc = Accumulator::default();
    let mut tau_sum = 0.0;
    let mut reached = 0;
    for (st, r) in stops.iter().zip(rewards) {
        let r = r?;
        acc.push(r[..per].iter().sum::<f64>() / per as f64);
        for s in &st[..per] {
            tau_sum += s.tau;
            reached += (s.k == n) as usize;
        }
    }
    let total = stops.len() * per;
    Ok(SimBatch {
        estimate: acc.estimate(),
        mean_tau: tau_sum / total as f64,
        reached_horizon: reached,
        n_paths: total,
        dt: h,
        nested: None,
        flagged: 0,
        records: None,
    })
}

/// `Ψ(t, μ)` with one interior profile per stopping step, built on demand.
pub struct EntryReward<'a> {
    config: &'a ModelConfig,
    h: f64,
    n: usize,
    cache: Vec<OnceLock<Result<(InteriorValue, NProfile, f64)>>>,
}

impl<'a> EntryReward<'a> {
    pub fn new(config: &'a ModelConfig, dt: f64) -> Self {
        let (n, h) = steps(config.horizon(), dt, false);
        EntryReward {
            config,
            h,
            n,
            cache: (0..n).map(|_| OnceLock::new()).collect(),
        }
    }

    fn entry(&self, k: usize) -> Result<&(InteriorValue, NProfile, f64)> {
        let t = self.h * k as f64;
        let cell = self.cache[k].get_or_init(|| {
            let iv = InteriorValue::new(self.config, t)?;
            let y =
                self.config.wealth_after_cost(t) - iv.subsistence().value(t) * self.config.habit.z0;
            if !(y > 0.0) {
                return Err(Error::BudgetViolation { t });
            }
            let profile = iv.profile(t);
            Ok((iv, profile, y))
        });
        cell.as_ref().map_err(|e| match e {
            Error::BudgetViolation { t } => Error::BudgetViolation { t: *t },
            other => Error::Internal(other.to_string()),
        })
    }

    /// Reward at step `k` (zero at the horizon).
    pub fn at(&self, k: usize, mu: f64) -> Result<f64> {
        if k >= self.n {
            return Ok(0.0);
        }
        let (iv, profile, y) = self.entry(k)?;
        Ok(iv.value_from(&profile.eval(mu), *y))
    }
}

/// Composite value of `rule`: the mean stopped reward, or with
/// `options.nested` the mean realized post-entry utility.
pub fn run_composite(
    config: &ModelConfig,
    rule: &StoppingRule,
    pathcfg: &PathConfig,
) -> Result<SimBatch> {
    run_composite_with(config, rule, pathcfg, CompositeOptions::default())
}

pub fn run_composite_with(
    config: &ModelConfig,
    rule: &StoppingRule,
    pathcfg: &PathConfig,
    options: CompositeOptions,
) -> Result<SimBatch> {
    pathcfg.check()?;
    let reward = EntryReward::new(config, pathcfg.dt);
    let mut batch = run_stopping(config, rule, pathcfg, |k, _, mu| reward.at(k, mu))?;
    if !(options.nested || options.keep_paths) {
        return Ok(batch);
    }
    let (stops, _, n) = stop_paths(config, rule, pathcfg);
    let per = pathcfg.paths_per_sample();
    let flat: Vec<Stop> = stops
        .iter()
        .flat_map(|s| s[..per].iter().copied())
        .collect();

    let mut utilities = vec![0.0; flat.len()];
    let mut surplus = vec![f64::INFINITY; flat.len()];
    let mut flags = vec![false; flat.len()];
    if options.nested {
        // one table per distinct entry step
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, st) in flat.iter().enumerate() {
            if st.k < n {
                groups[st.k].push(i);
            }
        }
        for (k, members) in groups.iter().enumerate().filter(|(_, m)| !m.is_empty()) {
            let (iv, _, _) = reward.entry(k)?;
            let t = flat[members[0]].tau;
            let table: NTable =
                stage2_table(config, iv, t, default_t_nodes(config.horizon() - t) / 4);
            let engine = Engine::new(config, iv, &table, t, pathcfg.dt);
            let x = config.wealth_after_cost(t);
            let runs = map_samples(members.len(), |m| {
                let i = members[m];
                let start = Stage2Start {
                    t,
                    x,
                    z: config.habit.z0,
                    mu: flat[i].mu,
                };
                let mut rng = path_rng(pathcfg.seed, NESTED_STREAM + i as u64);
                engine.run_path(&start, &mut rng, 1.0)
            });
            for (m, state) in runs.into_iter().enumerate() {
                let i = members[m];
                utilities[i] = state.utility;
                surplus[i] = state.min_surplus;
                flags[i] = state.flagged;
            }
        }
        let mut acc = Accumulator::default();
        for chunk in utilities.chunks(per) {
            acc.push(chunk.iter().sum::<f64>() / per as f64);
        }
        batch.nested = Some(acc.estimate());
        batch.flagged = flags.iter().filter(|&&f| f).count();
    }
    if options.keep_paths {
        let mut records = Vec::with_capacity(flat.len());
        for (i, st) in flat.iter().enumerate() {
            records.push(PathRecord {
                tau: st.tau,
                mu_tau: st.mu,
                reward: reward.at(st.k, st.mu)?,
                utility: utilities[i],
                min_surplus: surplus[i],
                flagged: flags[i],
            });
        }
        batch.records = Some(records);
    }
    Ok(batch)
}

#[derive(Clone, Debug, Serialize)]
pub struct MartingaleCheck {
    /// `ṽ(0, μ0)` from the solved surface.
    pub initial: f64,
    /// Checkpoints snapped to the simulation grid.
    pub checkpoints: Vec<f64>,
    /// Mean of `ṽ(t∧τ*, μ_{t∧τ*})` per checkpoint.
    pub means: Vec<Estimate>,
    /// `(a, b, estimate of mean_a − mean_b)` on common paths.
    pub differences: Vec<(usize, usize, Estimate)>,
}

impl MartingaleCheck {
    /// Every pairwise difference and every distance to `ṽ(0, μ0)` within
    /// `k` standard errors plus `budget` (the discretization error of `ṽ`).
    pub fn flat(&self, k: f64, budget: f64) -> bool {
        self.differences
            .iter()
            .all(|(_, _, d)| d.within(0.0, k, budget))
            && self.means.iter().all(|m| m.within(self.initial, k, budget))
    }
}

/// Stopped value process of the solved surface at the checkpoints.
pub fn martingale_check(
    config: &ModelConfig,
    sol: &VISolution,
    pathcfg: &PathConfig,
    checkpoints: &[f64],
) -> Result<MartingaleCheck> {
    pathcfg.check()?;
    let rule = entry_rule(sol);
    let horizon = config.horizon();
    let (n, h) = steps(horizon, pathcfg.dt, false);
    let tr = OuTransition::new(&config.market, h);
    let mu0 = config.market.mu0;
    let per = pathcfg.paths_per_sample();
    let marks: Vec<usize> = checkpoints
        .iter()
        .map(|&t| ((t.clamp(0.0, horizon) / h).round() as usize).min(n))
        .collect();
    let last = marks.iter().copied().max().unwrap_or(0);
    let grid_time = |k: usize| if k == n { horizon } else { h * k as f64 };
    let value = |k: usize, mu: f64| {
        if k == n {
            0.0
        } else {
            sol.value_at(grid_time(k), mu)
        }
    };

    let rows = map_samples(pathcfg.samples(), |s| {
        let mut rng = path_rng(pathcfg.seed, s as u64);
        let mut mu = [mu0; 2];
        let mut frozen: [Option<f64>; 2] = [None; 2];
        let mut out = vec![0.0; marks.len()];
        for k in 0..=last {
            let t = grid_time(k);
            let mut vals = [0.0; 2];
            for q in 0..per {
                if frozen[q].is_none() && rule.should_stop(t, mu[q], horizon) {
                    frozen[q] = Some(value(k, mu[q]));
                }
                vals[q] = frozen[q].unwrap_or_else(|| value(k, mu[q]));
            }
            for (slot, &mk) in marks.iter().enumerate() {
                if mk == k {
                    out[slot] = vals[..per].iter().sum::<f64>() / per as f64;
                }
            }
            let z = normal(&mut rng);
            for (q, m) in mu.iter_mut().enumerate().take(per) {
                let sign = if q == 0 { 1.0 } else { -1.0 };
                *m = tr.step_drift(*m, sign * z);
            }
        }
        out
    });

    let means = (0..marks.len())
        .map(|a| {
            let mut acc = Accumulator::default();
            rows.iter().for_each(|r| acc.push(r[a]));
            acc.estimate()
        })
        .collect();
    let mut differences = Vec::new();
    for a in 0..marks.len() {
        for b in a + 1..marks.len() {
            let mut acc = Accumulator::default();
            rows.iter().for_each(|r| acc.push(r[a] - r[b]));
            differences.push((a, b, acc.estimate()));
        }
    }
    Ok(MartingaleCheck {
        initial: sol.value_at(0.0, mu0),
        checkpoints: marks.iter().map(|&k| grid_time(k)).collect(),
        means,
        differences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n_paths: usize, dt: f64) -> PathConfig {
        PathConfig {
            n_paths,
            dt,
            seed: 17,
            antithetic: true,
        }
    }

    #[test]
    fn immediate_rule_is_exact() {
        let c = ModelConfig::figure1(0.25);
        let b = run_composite(&c, &StoppingRule::Immediate, &cfg(50, 0.05)).unwrap();
        let iv = InteriorValue::new(&c, 0.0).unwrap();
        let want = iv.value(0.0, c.cost.x0, c.habit.z0, c.market.mu0).unwrap();
        assert_eq!(b.estimate.stderr, 0.0);
        assert!((b.estimate.mean - want).abs() <= 1e-12 * want.abs());
        assert_eq!(b.mean_tau, 0.0);
    }

    #[test]
    fn fixed_time_stops_on_grid() {
        let c = ModelConfig::figure1(0.25);
        let b = run_stopping(
            &c,
            &StoppingRule::FixedTime(3.0),
            &cfg(20, 0.25),
            |_, t, _| Ok(t),
        )
        .unwrap();
        assert_eq!(b.estimate.mean, 3.0);
        let b = run_stopping(
            &c,
            &StoppingRule::FixedTime(99.0),
            &cfg(20, 0.25),
            |_, t, _| Ok(t),
        )
        .unwrap();
        assert_eq!(b.estimate.mean, 12.5);
        assert_eq!(b.reached_horizon, 20);
    }

    #[test]
    fn reward_of_martingale_is_flat() {
        // E[μ_t] = μ̄ + (μ0 − μ̄)e^{−λt}: stopping e^{λt}(μ − μ̄) at a fixed time keeps the mean
        let c = ModelConfig::figure1(0.25);
        let lam = c.market.lambda;
        let mu_bar = c.market.mu_bar;
        let want = c.market.mu0 - mu_bar;
        for t0 in [0.0, 2.0, 7.5] {
            let b = run_stopping(
                &c,
                &StoppingRule::FixedTime(t0),
                &cfg(2000, 0.1),
                |_, t, mu| Ok((lam * t).exp() * (mu - mu_bar)),
            )
            .unwrap();
            if t0 == 0.0 {
                assert_eq!(b.estimate.mean, want);
            }
            assert!(b.estimate.within(want, 3.0, 0.0), "{t0}: {:?}", b.estimate);
        }
    }
}
