//! Gauss-Legendre rules and composite integration on `[a, b]`.
//!
//! Nodes are the roots of `P_n` found by Newton iteration from the
//! Chebyshev-like initial guess `cos(π(i − 1/4)/(n + 1/2))`; weights are
//! `2 / ((1 − x²) P_n'(x)²)`.

use std::sync::OnceLock;

/// Nodes and weights on `[-1, 1]`, nodes ascending.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Shared 16-point rule.
    pub fn sixteen() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(16))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Calls `visit(s, weight)` for every node of the composite rule with
    /// `panels` equal panels on `[a, b]`.
    pub fn for_each_node(&self, a: f64, b: f64, panels: usize, mut visit: impl FnMut(f64, f64)) {
        let h = (b - a) / panels as f64;
        for k in 0..panels {
            let lo = a + h * k as f64;
            let half = 0.5 * h;
            let mid = lo + half;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                visit(mid + half * x, half * w);
            }
        }
    }

    pub fn integrate(&self, a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
        let mut sum = 0.0;
        self.for_each_node(a, b, panels, |s, w| sum += w * f(s));
        sum
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 16, 31] {
            let r = GaussLegendre::new(n);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-14, "n={n}: {s}");
        }
    }

    #[test]
    fn exact_for_degree_2n_minus_1() {
        let r = GaussLegendre::new(16);
        for k in 0..32u32 {
            let got = r.integrate(-1.0, 1.0, 1, |x| x.powi(k as i32));
            let want = if k % 2 == 1 {
                0.0
            } else {
                2.0 / (k as f64 + 1.0)
            };
            assert!((got - want).abs() < 1e-14, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn known_two_point_nodes() {
        let r = GaussLegendre::new(2);
        assert!((r.nodes[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((r.nodes[0] + 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn composite_exponential() {
        let r = GaussLegendre::sixteen();
        let got = r.integrate(0.0, 12.5, 8, |s| (0.21 * s).exp());
        let want = ((0.21f64 * 12.5).exp() - 1.0) / 0.21;
        assert!((got / want - 1.0).abs() < 1e-14);
    }
}
