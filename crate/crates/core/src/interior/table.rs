//! Tabulated `ln N` for fast repeated lookups along simulated paths.
//!
//! Stores `G = ln(N/(T − t))`, `G_η = N_η/N` and `G_ηη = N_ηη/N − (N_η/N)²`
//! on a uniform `(t, η)` grid. Lookups use cubic Hermite interpolation in `η`
//! (for `G` with slopes `G_η`, and for `G_η` with slopes `G_ηη`) and
//! four-point Lagrange interpolation in `t`. Points outside the table fall
//! back to direct quadrature.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::value::{InteriorValue, NEval};

#[derive(Clone, Debug)]
pub struct NTable {
    t0: f64,
    horizon: f64,
    ht: f64,
    n_t: usize,
    eta0: f64,
    he: f64,
    n_eta: usize,
    g: Vec<f64>,
    g_eta: Vec<f64>,
    g_ee: Vec<f64>,
}

#[inline]
fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, u: f64, h: f64) -> f64 {
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * y0
        + (u3 - 2.0 * u2 + u) * h * d0
        + (-2.0 * u3 + 3.0 * u2) * y1
        + (u3 - u2) * h * d1
}

impl NTable {
    /// Tabulates on `[t_from, T] × [eta_lo, eta_hi]` with `n_t ≥ 4` and `n_eta ≥ 2` nodes.
    pub fn build(
        iv: &InteriorValue,
        t_from: f64,
        n_t: usize,
        eta_lo: f64,
        eta_hi: f64,
        n_eta: usize,
    ) -> Self {
        assert!(n_t >= 4 && n_eta >= 2 && eta_hi > eta_lo);
        let horizon = iv.horizon();
        let t0 = t_from.max(iv.start());
        let ht = (horizon - t0) / (n_t - 1) as f64;
        let he = (eta_hi - eta_lo) / (n_eta - 1) as f64;

        let row = |i: usize| -> Vec<[f64; 3]> {
            let t = t0 + ht * i as f64;
            let remaining = horizon - t;
            if i == n_t - 1 || remaining <= 0.0 {
                return vec![[0.0; 3]; n_eta];
            }
            let profile = iv.profile(t);
            (0..n_eta)
                .map(|j| {
                    let e = profile.eval(eta_lo + he * j as f64);
                    [
                        e.ln_n - remaining.ln(),
                        e.eta_ratio,
                        e.eta_eta_ratio - e.eta_ratio * e.eta_ratio,
                    ]
                })
                .collect()
        };
        #[cfg(feature = "parallel")]
        let rows: Vec<Vec<[f64; 3]>> = (0..n_t).into_par_iter().map(row).collect();
        #[cfg(not(feature = "parallel"))]
        let rows: Vec<Vec<[f64; 3]>> = (0..n_t).map(row).collect();

        let mut g = Vec::with_capacity(n_t * n_eta);
        let mut g_eta = Vec::with_capacity(n_t * n_eta);
        let mut g_ee = Vec::with_capacity(n_t * n_eta);
        for r in rows {
            for [a, b, c] in r {
                g.push(a);
                g_eta.push(b);
                g_ee.push(c);
            }
        }
        NTable {
            t0,
            horizon,
            ht,
            n_t,
            eta0: eta_lo,
            he,
            n_eta,
            g,
            g_eta,
            g_ee,
        }
    }

    pub fn eta_range(&self) -> (f64, f64) {
        (self.eta0, self.eta0 + self.he * (self.n_eta - 1) as f64)
    }

    /// `(G, G_η)` on row `i` at `η`.
    #[inline]
    fn row_eval(&self, i: usize, j: usize, u: f64) -> (f64, f64) {
        let k = i * self.n_eta + j;
        let g = hermite(
            self.g[k],
            self.g[k + 1],
            self.g_eta[k],
            self.g_eta[k + 1],
            u,
            self.he,
        );
        let d = hermite(
            self.g_eta[k],
            self.g_eta[k + 1],
            self.g_ee[k],
            self.g_ee[k + 1],
            u,
            self.he,
        );
        (g, d)
    }

    /// `ln N` and `N_η/N` at `(t, η)`, or `None` outside the table.
    pub fn lookup(&self, t: f64, eta: f64) -> Option<(f64, f64)> {
        if t < self.t0 || t >= self.horizon {
            return None;
        }
        let x = (eta - self.eta0) / self.he;
        if !(x >= 0.0 && x <= (self.n_eta - 1) as f64) {
            return None;
        }
        let j = (x.floor() as usize).min(self.n_eta - 2);
        let u = x - j as f64;

        let y = (t - self.t0) / self.ht;
        let i = (y.floor() as usize).min(self.n_t - 2);
        let base = i.saturating_sub(1).min(self.n_t - 4);
        let s = y - base as f64;
        // Lagrange weights on nodes base..base+3 at local coordinate s
        let w = [
            -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0,
            s * (s - 2.0) * (s - 3.0) / 2.0,
            -s * (s - 1.0) * (s - 3.0) / 2.0,
            s * (s - 1.0) * (s - 2.0) / 6.0,
        ];
        let (mut g, mut d) = (0.0, 0.0);
        for (q, wq) in w.iter().enumerate() {
            let (gq, dq) = self.row_eval(base + q, j, u);
            g += wq * gq;
            d += wq * dq;
        }
        Some((g + (self.horizon - t).ln(), d))
    }

    /// Table lookup with quadrature fallback.
    pub fn eval(&self, iv: &InteriorValue, t: f64, eta: f64) -> NEval {
        match self.lookup(t, eta) {
            Some((ln_n, eta_ratio)) => NEval {
                ln_n,
                eta_ratio,
                eta_eta_ratio: f64::NAN,
            },
            None => iv.n_eval(t, eta),
        }
    }
}
