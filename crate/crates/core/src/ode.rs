//! Fixed-step classical Runge-Kutta and finite-difference helpers.
//!
//! These are the independent oracles for every closed form in the crate, so
//! they are kept deliberately plain.

/// One classical RK4 step of size `h` (may be negative).
pub fn rk4_step<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    t: f64,
    y: &[f64; N],
    h: f64,
) -> [f64; N] {
    let axpy = |y: &[f64; N], k: &[f64; N], c: f64| {
        let mut out = *y;
        for i in 0..N {
            out[i] += c * k[i];
        }
        out
    };
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &axpy(y, &k1, 0.5 * h));
    let k3 = f(t + 0.5 * h, &axpy(y, &k2, 0.5 * h));
    let k4 = f(t + h, &axpy(y, &k3, h));
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Integrates from `t0` to `t1` in `steps` equal steps (backward when `t1 < t0`).
pub fn rk4_integrate<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    t0: f64,
    y0: [f64; N],
    t1: f64,
    steps: usize,
) -> [f64; N] {
    if steps == 0 || t1 == t0 {
        return y0;
    }
    let h = (t1 - t0) / steps as f64;
    let mut y = y0;
    for i in 0..steps {
        y = rk4_step(f, t0 + h * i as f64, &y, h);
    }
    y
}

/// Number of steps of size at most `step` covering `|t1 − t0|`.
pub fn steps_for(t0: f64, t1: f64, step: f64) -> usize {
    ((t1 - t0).abs() / step).ceil().max(1.0) as usize
}

/// Second-order derivative estimate of `f` at `t`, staying inside `[lo, hi]`:
/// centered where possible, otherwise the one-sided three-point stencil.
pub fn fd_derivative(f: impl Fn(f64) -> f64, t: f64, h: f64, lo: f64, hi: f64) -> f64 {
    if t - h >= lo && t + h <= hi {
        (f(t + h) - f(t - h)) / (2.0 * h)
    } else if t + 2.0 * h <= hi {
        (-3.0 * f(t) + 4.0 * f(t + h) - f(t + 2.0 * h)) / (2.0 * h)
    } else {
        (3.0 * f(t) - 4.0 * f(t - h) + f(t - 2.0 * h)) / (2.0 * h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let f = |_t: f64, y: &[f64; 1]| [-0.7 * y[0]];
        let y = rk4_integrate(&f, 0.0, [1.0], 3.0, 3000);
        assert!((y[0] - (-2.1f64).exp()).abs() < 1e-13);
        let back = rk4_integrate(&f, 3.0, y, 0.0, 3000);
        assert!((back[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fourth_order_convergence() {
        let f = |t: f64, y: &[f64; 2]| [y[1], -y[0] + t.sin() * 0.0];
        let exact = 2f64.cos();
        let e1 = (rk4_integrate(&f, 0.0, [1.0, 0.0], 2.0, 20)[0] - exact).abs();
        let e2 = (rk4_integrate(&f, 0.0, [1.0, 0.0], 2.0, 40)[0] - exact).abs();
        let ratio = e1 / e2;
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn derivative_stencils() {
        let f = |t: f64| t.powi(2);
        assert!((fd_derivative(f, 0.5, 1e-4, 0.0, 1.0) - 1.0).abs() < 1e-10);
        assert!((fd_derivative(f, 0.0, 1e-4, 0.0, 1.0) - 0.0).abs() < 1e-10);
        assert!((fd_derivative(f, 1.0, 1e-4, 0.0, 1.0) - 2.0).abs() < 1e-10);
    }
}
