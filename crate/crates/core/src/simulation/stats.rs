//! Order-stable accumulation of Monte Carlo samples.

use serde::Serialize;

/// Neumaier-compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Count, compensated sum and Welford second moment; merged with Chan's formula.
#[derive(Clone, Copy, Debug, Default)]
pub struct Accumulator {
    n: u64,
    sum: Neumaier,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum.add(x);
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.mean += d * other.n as f64 / n as f64;
        self.sum.add(other.sum.sum);
        self.sum.add(other.sum.comp);
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn estimate(&self) -> Estimate {
        let n = self.n;
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                stderr: f64::NAN,
                n: 0,
            };
        }
        let mean = self.sum.value() / n as f64;
        let var = if n > 1 {
            (self.m2 / (n - 1) as f64).max(0.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    /// Number of independent samples (antithetic pairs count once).
    pub n: u64,
}

impl Estimate {
    /// `|mean − target| ≤ k·stderr + budget`.
    pub fn within(&self, target: f64, k: f64, budget: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + budget
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum() {
        let mut s = Neumaier::default();
        for x in [1.0, 1e100, 1.0, -1e100] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000)
            .map(|i| ((i * 37 % 101) as f64).sin() + 1e6)
            .collect();
        let mut whole = Accumulator::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut parts = Accumulator::default();
        for chunk in xs.chunks(64) {
            let mut a = Accumulator::default();
            chunk.iter().for_each(|&x| a.push(x));
            parts.merge(&a);
        }
        let (a, b) = (whole.estimate(), parts.estimate());
        assert_eq!(a.n, b.n);
        assert!((a.mean - b.mean).abs() < 1e-9);
        assert!((a.stderr / b.stderr - 1.0).abs() < 1e-9);
    }
}
