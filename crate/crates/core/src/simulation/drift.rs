//! Drift paths under full information and filter-error samples.

use serde::{Deserialize, Serialize};

use super::rng::{normal, path_rng, OuTransition};
use crate::error::{Error, Result};
use crate::filtering::{filter_step, FilterState, RiccatiPath};
use crate::params::ModelConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub antithetic: bool,
}

impl PathConfig {
    pub fn check(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Simulation("n_paths must be >= 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Simulation("dt must be > 0".into()));
        }
        Ok(())
    }

    /// Independent samples: antithetic pairs, or single paths.
    pub fn samples(&self) -> usize {
        if self.antithetic {
            self.n_paths.div_ceil(2)
        } else {
            self.n_paths
        }
    }

    /// Paths per sample.
    pub fn paths_per_sample(&self) -> usize {
        if self.antithetic {
            2
        } else {
            1
        }
    }
}

/// Maps `f` over sample indices, in parallel when enabled, preserving order.
pub(crate) fn map_samples<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Step count and effective step so that `n·h = length` exactly.
pub(crate) fn steps(length: f64, dt: f64, even: bool) -> (usize, f64) {
    if length <= 0.0 {
        return (0, dt);
    }
    let mut n = (length / dt - 1e-9).ceil().max(1.0) as usize;
    if even && n % 2 == 1 {
        n += 1;
    }
    (n, length / n as f64)
}

/// Drift paths on `[0, T]` from `μ0` with exact OU transitions.
///
/// Returns `paths × (steps + 1)` values; antithetic partners follow each other.
pub fn simulate_drift(config: &ModelConfig, pathcfg: &PathConfig) -> Result<Vec<Vec<f64>>> {
    pathcfg.check()?;
    let (n, h) = steps(config.horizon(), pathcfg.dt, false);
    let tr = OuTransition::new(&config.market, h);
    let mu0 = config.market.mu0;
    let per = pathcfg.paths_per_sample();
    let groups = map_samples(pathcfg.samples(), |s| {
        let mut rng = path_rng(pathcfg.seed, s as u64);
        let mut paths = vec![Vec::with_capacity(n + 1); per];
        let mut mu = vec![mu0; per];
        for p in paths.iter_mut() {
            p.push(mu0);
        }
        for _ in 0..n {
            let z = normal(&mut rng);
            for (k, sign) in [1.0, -1.0].iter().take(per).enumerate() {
                mu[k] = tr.step_drift(mu[k], sign * z);
                paths[k].push(mu[k]);
            }
        }
        paths
    });
    let mut out: Vec<Vec<f64>> = groups.into_iter().flatten().collect();
    out.truncate(pathcfg.n_paths);
    Ok(out)
}

/// Samples of `μ_t − μ̂_t` at the requested times for a filter started at
/// `start` with `μ̂ = μ`. Returns one vector per time.
pub fn filter_errors(
    config: &ModelConfig,
    start: f64,
    pathcfg: &PathConfig,
    times: &[f64],
) -> Result<Vec<Vec<f64>>> {
    pathcfg.check()?;
    let m = &config.market;
    let (n, h) = steps(config.horizon() - start, pathcfg.dt, false);
    let tr = OuTransition::new(m, h);
    let path = RiccatiPath::new(m, start);
    let marks: Vec<usize> = times
        .iter()
        .map(|&t| (((t - start) / h).round() as usize).min(n))
        .collect();
    let rows = map_samples(pathcfg.n_paths, |s| {
        let mut rng = path_rng(pathcfg.seed, s as u64);
        let mut mu = m.mu0;
        let mut state = FilterState::at_entry(start, mu);
        let mut out = vec![0.0; marks.len()];
        for k in 0..=n {
            for (slot, &mk) in marks.iter().enumerate() {
                if mk == k {
                    out[slot] = mu - state.mu_hat;
                }
            }
            if k == n {
                break;
            }
            let (mu_next, dw) = tr.step(mu, normal(&mut rng), normal(&mut rng));
            let innovation = ((mu - state.mu_hat) * h + m.sigma_s * dw) / m.sigma_s;
            state = filter_step(state, m, &path, h, innovation);
            mu = mu_next;
        }
        out
    });
    Ok((0..marks.len())
        .map(|i| rows.iter().map(|r| r[i]).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_paths() {
        let mut c = ModelConfig::figure1(0.25);
        c.market.sigma_mu = 0.0;
        c.market.mu0 = 1.0;
        let cfg = PathConfig {
            n_paths: 3,
            dt: 0.5,
            seed: 1,
            antithetic: true,
        };
        let paths = simulate_drift(&c, &cfg).unwrap();
        assert_eq!(paths.len(), 3);
        for p in &paths {
            for (k, mu) in p.iter().enumerate() {
                let want = 0.25 + 0.75 * (-0.1 * 0.5 * k as f64).exp();
                assert!((mu - want).abs() < 1e-14);
            }
        }
        c.market.lambda = 0.0;
        let paths = simulate_drift(&c, &cfg).unwrap();
        assert!(paths.iter().flatten().all(|&mu| mu == 1.0));
    }

    #[test]
    fn ou_moments() {
        let c = ModelConfig::figure1(0.25);
        let m = &c.market;
        let cfg = PathConfig {
            n_paths: 4000,
            dt: 0.25,
            seed: 11,
            antithetic: false,
        };
        let mut c2 = c.clone();
        c2.market.mu0 = 1.0;
        let paths = simulate_drift(&c2, &cfg).unwrap();
        let k = 20; // t = 5
        let t = 5.0;
        let xs: Vec<f64> = paths.iter().map(|p| p[k]).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let want_mean = m.mu_bar + 0.75 * (-m.lambda * t).exp();
        let want_var = m.sigma_mu.powi(2) * (1.0 - (-2.0 * m.lambda * t).exp()) / (2.0 * m.lambda);
        assert!((mean - want_mean).abs() < 3.0 * (want_var / n).sqrt());
        // variance of the sample variance is about 2σ⁴/n for Gaussians
        assert!((var - want_var).abs() < 3.0 * want_var * (2.0 / n).sqrt());
    }

    #[test]
    fn filter_error_variance_matches_riccati() {
        let c = ModelConfig::figure1(0.25);
        let cfg = PathConfig {
            n_paths: 4000,
            dt: 0.01,
            seed: 5,
            antithetic: false,
        };
        let times = [0.5, 2.0, 6.0];
        let errs = filter_errors(&c, 0.0, &cfg, &times).unwrap();
        let path = RiccatiPath::new(&c.market, 0.0);
        for (t, e) in times.iter().zip(&errs) {
            let n = e.len() as f64;
            let mean = e.iter().sum::<f64>() / n;
            let var = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let want = path.sigma(*t);
            assert!(
                (var - want).abs() < 3.0 * want * (2.0 / n).sqrt(),
                "t={t}: {var} vs {want}"
            );
        }
    }
}
