//! Backward θ-scheme for the obstacle problem
//!
//! ```text
//! min{ −v_t − 𝓛v, v − Ψ } = 0,   𝓛v = −λ(η − μ̄) v_η + ½σ_μ² v_ηη,
//! ```
//!
//! with `v = Ψ` on the drift edges and at the last time slice. Each step
//! solves the tridiagonal complementarity problem
//!
//! ```text
//! (I − θΔt𝓛_h) vⁿ ≥ (I + (1 − θ)Δt𝓛_h) vⁿ⁺¹,   vⁿ ≥ Ψⁿ,   with one equality per node
//! ```
//!
//! by projected SOR. `𝓛_h` uses central differences, switching to upwind
//! differences for the drift where the cell Péclet number exceeds one, so
//! the implicit matrix stays an M-matrix.

use serde::Serialize;

use super::grid::Grid2D;
use super::obstacle::Obstacle;
use crate::error::{Error, Result};
use crate::params::MarketParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Scheme {
    /// 1 = implicit Euler, 0.5 = Crank-Nicolson.
    pub theta: f64,
    /// Stopping threshold on the largest PSOR update, relative to the slice scale.
    pub psor_tol: f64,
    pub psor_max_iter: usize,
    pub omega: f64,
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme {
            theta: 1.0,
            psor_tol: 1e-10,
            psor_max_iter: 20_000,
            omega: 1.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SliceDiagnostics {
    pub iterations: usize,
    pub omega: f64,
    /// Largest final update relative to the slice scale.
    pub last_update: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VISolution {
    pub grid: Grid2D,
    pub obstacle: Obstacle,
    pub scheme: Scheme,
    /// Row-major `n_t × n_eta` value surface.
    pub values: Vec<f64>,
    /// Contact threshold `1e−9 (1 + max|Ψ|)`.
    pub tol_gap: f64,
    pub diagnostics: Vec<SliceDiagnostics>,
    #[serde(skip)]
    operator: Operator,
}

/// Tridiagonal coefficients of `𝓛_h` on interior nodes.
#[derive(Clone, Debug, Default)]
struct Operator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Operator {
    fn new(market: &MarketParams, grid: &Grid2D) -> Self {
        let n = grid.n_eta();
        let h = grid.deta();
        let d = 0.5 * market.sigma_mu * market.sigma_mu;
        let mut op = Operator {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        };
        for j in 1..n - 1 {
            let b = -market.lambda * (grid.eta_nodes[j] - market.mu_bar);
            let diff = d / (h * h);
            let (lo, di, up) = if d > 0.0 && b.abs() * h <= 2.0 * d {
                (diff - b / (2.0 * h), -2.0 * diff, diff + b / (2.0 * h))
            } else if b >= 0.0 {
                (diff, -2.0 * diff - b / h, diff + b / h)
            } else {
                (diff - b / h, -2.0 * diff + b / h, diff)
            };
            op.lower[j] = lo;
            op.diag[j] = di;
            op.upper[j] = up;
        }
        op
    }

    #[inline]
    fn apply(&self, v: &[f64], j: usize) -> f64 {
        self.lower[j] * v[j - 1] + self.diag[j] * v[j] + self.upper[j] * v[j + 1]
    }
}

impl VISolution {
    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n_eta() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.grid.n_eta();
        &self.values[i * n..(i + 1) * n]
    }

    /// `ṽ − Ψ` at a node.
    #[inline]
    pub fn gap(&self, i: usize, j: usize) -> f64 {
        self.value(i, j) - self.obstacle.get(i, j)
    }

    pub fn in_continuation(&self, i: usize, j: usize) -> bool {
        self.gap(i, j) > self.tol_gap
    }

    /// Bilinear interpolation of the value surface.
    pub fn value_at(&self, t: f64, eta: f64) -> f64 {
        let (i, u) = self.grid.locate_t(t);
        let (j, w) = self.grid.locate_eta(eta);
        let v00 = self.value(i, j);
        let v01 = self.value(i, j + 1);
        let v10 = self.value(i + 1, j);
        let v11 = self.value(i + 1, j + 1);
        (1.0 - u) * ((1.0 - w) * v00 + w * v01) + u * ((1.0 - w) * v10 + w * v11)
    }

    /// Value at `(0, η)`, linear in `η` between nodes.
    pub fn initial_value(&self, eta: f64) -> f64 {
        self.value_at(0.0, eta)
    }

    pub fn total_iterations(&self) -> usize {
        self.diagnostics.iter().map(|d| d.iterations).sum()
    }

    /// Largest `|min(ṽ − Ψ, −ṽ_t − 𝓛_h ṽ)|` over interior nodes of every
    /// non-terminal slice, in the units of `ṽ`.
    pub fn complementarity_residual(&self) -> f64 {
        let n = self.grid.n_eta();
        let dt = self.grid.dt();
        let theta = self.scheme.theta;
        let mut worst: f64 = 0.0;
        for i in 0..self.grid.n_t() - 1 {
            let cur = self.row(i);
            let next = self.row(i + 1);
            for j in 1..n - 1 {
                let pde = (cur[j] - next[j]) / dt
                    - theta * self.operator.apply(cur, j)
                    - (1.0 - theta) * self.operator.apply(next, j);
                let r = (cur[j] - self.obstacle.get(i, j)).min(pde);
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    /// Smallest `ṽ − Ψ` (negative means the projection failed).
    pub fn min_gap(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.obstacle.values)
            .fold(f64::INFINITY, |m, (v, p)| m.min(v - p))
    }
}

/// Solves the obstacle problem backward from the last slice.
pub fn solve_vi(
    market: &MarketParams,
    grid: &Grid2D,
    obstacle: &Obstacle,
    scheme: Scheme,
) -> Result<VISolution> {
    if obstacle.n_t != grid.n_t() || obstacle.n_eta != grid.n_eta() {
        return Err(Error::Grid("obstacle does not match grid".into()));
    }
    if !(0.0..=1.0).contains(&scheme.theta) {
        return Err(Error::Grid(format!(
            "theta must lie in [0, 1], got {}",
            scheme.theta
        )));
    }
    let n_t = grid.n_t();
    let n = grid.n_eta();
    let dt = grid.dt();
    let op = Operator::new(market, grid);
    let theta = scheme.theta;

    let m_lower: Vec<f64> = op.lower.iter().map(|l| -theta * dt * l).collect();
    let m_diag: Vec<f64> = op.diag.iter().map(|d| 1.0 - theta * dt * d).collect();
    let m_upper: Vec<f64> = op.upper.iter().map(|u| -theta * dt * u).collect();

    let mut values = vec![0.0; n_t * n];
    values[(n_t - 1) * n..].copy_from_slice(obstacle.row(n_t - 1));
    let mut diagnostics = vec![
        SliceDiagnostics {
            iterations: 0,
            omega: scheme.omega,
            last_update: 0.0,
        };
        n_t
    ];
    let mut rhs = vec![0.0; n];

    for i in (0..n_t - 1).rev() {
        let (head, tail) = values.split_at_mut((i + 1) * n);
        let next = &tail[..n];
        let cur = &mut head[i * n..];
        let psi = obstacle.row(i);

        for j in 1..n - 1 {
            rhs[j] = next[j] + (1.0 - theta) * dt * op.apply(next, j);
        }
        let scale = psi
            .iter()
            .chain(next.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);

        let lcp_residual = |cur: &[f64]| -> f64 {
            let mut worst: f64 = 0.0;
            for j in 1..n - 1 {
                let r =
                    m_lower[j] * cur[j - 1] + m_diag[j] * cur[j] + m_upper[j] * cur[j + 1] - rhs[j];
                worst = worst.max((cur[j] - psi[j]).min(r).abs());
            }
            worst / scale
        };
        let attempt = |omega: f64, cur: &mut [f64]| -> Option<SliceDiagnostics> {
            for j in 0..n {
                cur[j] = next[j].max(psi[j]);
            }
            cur[0] = psi[0];
            cur[n - 1] = psi[n - 1];
            for it in 1..=scheme.psor_max_iter {
                let mut change: f64 = 0.0;
                for j in 1..n - 1 {
                    let y =
                        (rhs[j] - m_lower[j] * cur[j - 1] - m_upper[j] * cur[j + 1]) / m_diag[j];
                    let v = (cur[j] + omega * (y - cur[j])).max(psi[j]);
                    change = change.max((v - cur[j]).abs());
                    cur[j] = v;
                }
                let rel = change / scale;
                if !rel.is_finite() {
                    return None;
                }
                if rel <= scheme.psor_tol {
                    return Some(SliceDiagnostics {
                        iterations: it,
                        omega,
                        last_update: rel,
                    });
                }
            }
            None
        };

        let diag = match attempt(scheme.omega, cur) {
            Some(d) => d,
            None if scheme.omega != 1.0 => match attempt(1.0, cur) {
                Some(d) => d,
                None => return Err(non_convergence(i, scheme, lcp_residual(cur))),
            },
            None => return Err(non_convergence(i, scheme, lcp_residual(cur))),
        };
        diagnostics[i] = diag;
    }

    let tol_gap = 1e-9 * (1.0 + obstacle.max_abs());
    Ok(VISolution {
        grid: grid.clone(),
        obstacle: obstacle.clone(),
        scheme,
        values,
        tol_gap,
        diagnostics,
        operator: op,
    })
}

fn non_convergence(slice: usize, scheme: Scheme, residual: f64) -> Error {
    Error::PsorNonConvergence {
        slice,
        iterations: scheme.psor_max_iter,
        residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelConfig;

    fn synthetic(grid: &Grid2D, mu_bar: f64) -> Obstacle {
        Obstacle::from_fn(grid, |t, eta| (eta - mu_bar).powi(2) * (-t / 4.0).exp())
    }

    #[test]
    fn zero_obstacle_gives_zero() {
        let c = ModelConfig::figure1(0.25);
        let grid = Grid2D::centered(&c.market, 21, 41, 5.0).unwrap();
        let sol = solve_vi(&c.market, &grid, &Obstacle::zeros(&grid), Scheme::default()).unwrap();
        assert!(sol.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projection_and_complementarity() {
        let c = ModelConfig::figure1(0.25);
        let grid = Grid2D::centered(&c.market, 41, 81, 3.0).unwrap();
        let obs = synthetic(&grid, 0.25);
        for theta in [1.0, 0.5] {
            let scheme = Scheme {
                theta,
                ..Scheme::default()
            };
            let sol = solve_vi(&c.market, &grid, &obs, scheme).unwrap();
            assert!(sol.min_gap() >= 0.0);
            assert!(
                sol.complementarity_residual() <= 1e-6 * obs.max_abs(),
                "theta={theta}"
            );
            assert_eq!(sol.row(40), obs.row(40));
        }
    }

    #[test]
    fn larger_obstacle_larger_value() {
        let c = ModelConfig::figure1(0.25);
        let grid = Grid2D::centered(&c.market, 21, 41, 3.0).unwrap();
        let low = synthetic(&grid, 0.25);
        let mut high = low.clone();
        for v in &mut high.values {
            *v += 0.1;
        }
        let a = solve_vi(&c.market, &grid, &low, Scheme::default()).unwrap();
        let b = solve_vi(&c.market, &grid, &high, Scheme::default()).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!(*x <= y + 1e-9);
        }
    }

    #[test]
    fn omega_fallback_recovers() {
        let c = ModelConfig::figure1(0.25);
        let grid = Grid2D::centered(&c.market, 11, 41, 3.0).unwrap();
        let obs = synthetic(&grid, 0.25);
        let scheme = Scheme {
            omega: 2.5,
            ..Scheme::default()
        };
        let sol = solve_vi(&c.market, &grid, &obs, scheme).unwrap();
        assert!(sol.diagnostics[..10].iter().all(|d| d.omega == 1.0));
    }

    #[test]
    fn iteration_cap_reports_error() {
        let c = ModelConfig::figure1(0.25);
        let grid = Grid2D::centered(&c.market, 11, 41, 3.0).unwrap();
        let obs = synthetic(&grid, 0.25);
        let scheme = Scheme {
            psor_max_iter: 1,
            psor_tol: 1e-300,
            ..Scheme::default()
        };
        assert!(matches!(
            solve_vi(&c.market, &grid, &obs, scheme),
            Err(Error::PsorNonConvergence { slice: 9, .. })
        ));
    }
}
