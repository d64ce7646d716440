//! Subsistence cost per unit of habit,
//!
//! ```text
//! m(t) = ∫_t^T exp(∫_t^s (δ(v) − α(v)) dv) ds,
//! ```
//!
//! the wealth needed to sustain consumption at the habit level until `T`.
//! For piecewise-constant rates it is exact on every segment:
//! `m(u0) = φ(r, h) + e^{rh} m(u1)` with `φ(r, h) = (e^{rh} − 1)/r`, `h = u1 − u0`.

use crate::params::HabitParams;

#[derive(Clone, Debug)]
pub struct SubsistenceCost {
    horizon: f64,
    /// Segment boundaries `0 = u_0 < ... < u_n = T`.
    knots: Vec<f64>,
    /// `δ − α` on each segment.
    rates: Vec<f64>,
    /// `m` at each knot.
    at_knots: Vec<f64>,
}

/// `(e^{rh} − 1)/r`, continuous at `r = 0`.
#[inline]
fn phi(r: f64, h: f64) -> f64 {
    let x = r * h;
    if x.abs() < 1e-10 {
        h * (1.0 + 0.5 * x)
    } else {
        x.exp_m1() / r
    }
}

impl SubsistenceCost {
    pub fn new(habit: &HabitParams, horizon: f64) -> Self {
        let mut knots = vec![0.0];
        let mut inner: Vec<f64> = habit
            .alpha
            .breaks()
            .iter()
            .chain(habit.delta.breaks())
            .copied()
            .filter(|&b| b > 0.0 && b < horizon)
            .collect();
        inner.sort_by(f64::total_cmp);
        inner.dedup();
        knots.extend(inner);
        knots.push(horizon.max(0.0));

        let rates: Vec<f64> = knots
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                habit.delta.at(mid) - habit.alpha.at(mid)
            })
            .collect();

        let mut at_knots = vec![0.0; knots.len()];
        for k in (0..rates.len()).rev() {
            let h = knots[k + 1] - knots[k];
            at_knots[k] = phi(rates[k], h) + (rates[k] * h).exp() * at_knots[k + 1];
        }
        SubsistenceCost {
            horizon,
            knots,
            rates,
            at_knots,
        }
    }

    #[inline]
    fn segment(&self, t: f64) -> usize {
        let idx = self.knots.partition_point(|&u| u <= t);
        idx.saturating_sub(1).min(self.rates.len() - 1)
    }

    /// `m(t)` for `t` clamped to `[0, T]`.
    pub fn value(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.horizon);
        let k = self.segment(t);
        let h = self.knots[k + 1] - t;
        phi(self.rates[k], h) + (self.rates[k] * h).exp() * self.at_knots[k + 1]
    }

    /// `m'(t) = −1 − (δ(t) − α(t)) m(t)`.
    pub fn derivative(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.horizon);
        -1.0 - self.rates[self.segment(t)] * self.value(t)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{PiecewiseRate, Rate};
    use crate::quadrature::GaussLegendre;

    fn habit(alpha: Rate, delta: Rate) -> HabitParams {
        HabitParams {
            alpha,
            delta,
            z0: 0.5,
        }
    }

    #[test]
    fn terminal_and_equal_rates() {
        let m = SubsistenceCost::new(&habit(0.3.into(), 0.3.into()), 10.0);
        assert_eq!(m.value(10.0), 0.0);
        for t in [0.0, 2.5, 9.0] {
            assert!((m.value(t) - (10.0 - t)).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_closed_form() {
        let m = SubsistenceCost::new(&habit(0.04.into(), 0.25.into()), 12.5);
        let r: f64 = 0.21;
        for t in [0.0, 1.0, 7.3, 12.5] {
            let want = ((r * (12.5 - t)).exp() - 1.0) / r;
            assert!((m.value(t) - want).abs() <= 1e-13 * (1.0 + want));
        }
    }

    #[test]
    fn piecewise_matches_quadrature() {
        let delta = Rate::Piecewise(PiecewiseRate {
            breaks: vec![3.0, 8.0],
            values: vec![0.1, 0.4, 0.2],
        });
        let alpha = Rate::Piecewise(PiecewiseRate {
            breaks: vec![5.0],
            values: vec![0.05, 0.3],
        });
        let h = habit(alpha, delta);
        let m = SubsistenceCost::new(&h, 12.0);
        let rule = GaussLegendre::new(16);
        // inner integral of a piecewise-constant rate is piecewise linear: integrate exactly
        let inner = |t: f64, s: f64| {
            let pts = [t, 3.0, 5.0, 8.0, s];
            let mut acc = 0.0;
            for w in pts.windows(2) {
                let (a, b) = (w[0].max(t).min(s), w[1].max(t).min(s));
                if b > a {
                    let mid = 0.5 * (a + b);
                    acc += (h.delta.at(mid) - h.alpha.at(mid)) * (b - a);
                }
            }
            acc
        };
        for t in [0.0, 2.0, 4.0, 6.5, 11.0] {
            // split the outer integral at every break so each panel is smooth
            let mut edges = vec![t];
            edges.extend([3.0, 5.0, 8.0].iter().filter(|&&b| b > t));
            edges.push(12.0);
            let mut want = 0.0;
            for w in edges.windows(2) {
                want += rule.integrate(w[0], w[1], 4, |s| inner(t, s).exp());
            }
            assert!((m.value(t) - want).abs() < 1e-12 * (1.0 + want), "t={t}");
        }
    }

    #[test]
    fn derivative_matches_difference() {
        let m = SubsistenceCost::new(&habit(0.04.into(), 0.25.into()), 12.5);
        for t in [0.5, 6.0, 12.0] {
            let fd = (m.value(t + 1e-6) - m.value(t - 1e-6)) / 2e-6;
            assert!((m.derivative(t) - fd).abs() < 1e-7);
        }
    }
}
