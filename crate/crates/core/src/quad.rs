//! Double-exponential quadrature on finite and half-infinite intervals.
//!
//! Both rules tolerate algebraic endpoint singularities, which is what the
//! Mittag-Leffler spectral integrals need.

use std::f64::consts::FRAC_PI_2;

const MAX_LEVEL: usize = 11;
const T_MAX: f64 = 6.5;

/// Tanh-sinh rule on `[a, b]`. The integrand receives the abscissa together
/// with its distances to both endpoints, computed without cancellation.
pub(crate) fn tanh_sinh(f: impl Fn(f64, f64, f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    let half = 0.5 * (b - a);
    let width = b - a;
    let eval = |t: f64| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let cu = u.cosh();
        let w = half * FRAC_PI_2 * t.cosh() / (cu * cu);
        if !(w > 0.0) || !w.is_finite() {
            return 0.0;
        }
        let from_a = width / (1.0 + (-2.0 * u).exp());
        let from_b = width / (1.0 + (2.0 * u).exp());
        if from_a <= 0.0 || from_b <= 0.0 {
            return 0.0;
        }
        let x = if t < 0.0 { a + from_a } else { b - from_b };
        let v = f(x, from_a, from_b);
        if v.is_finite() {
            w * v
        } else {
            0.0
        }
    };
    refine(eval, -T_MAX, T_MAX, rel_tol)
}

/// Exp-sinh rule on `[a, ∞)`; the integrand must decay at infinity.
pub(crate) fn exp_sinh(f: impl Fn(f64, f64) -> f64, a: f64, rel_tol: f64) -> f64 {
    let eval = |t: f64| -> f64 {
        let e = (FRAC_PI_2 * t.sinh()).exp();
        let w = FRAC_PI_2 * t.cosh() * e;
        if !(e > 0.0) || !w.is_finite() {
            return 0.0;
        }
        let v = f(a + e, e);
        if v.is_finite() {
            w * v
        } else {
            0.0
        }
    };
    refine(eval, -T_MAX, T_MAX, rel_tol)
}

/// Trapezoidal sums over `[t_lo, t_hi]` with halving steps until two
/// consecutive levels agree.
fn refine(g: impl Fn(f64) -> f64, t_lo: f64, t_hi: f64, rel_tol: f64) -> f64 {
    let mut h = 0.5;
    let mut sum = 0.0;
    let mut k = (t_lo / h).ceil() as i64;
    while (k as f64) * h <= t_hi {
        sum += g(k as f64 * h);
        k += 1;
    }
    let mut estimate = sum * h;
    for _ in 0..MAX_LEVEL {
        h *= 0.5;
        // new nodes are the odd multiples of h
        let mut k = ((t_lo / h).ceil() as i64) | 1;
        while (k as f64) * h <= t_hi {
            sum += g(k as f64 * h);
            k += 2;
        }
        let next = sum * h;
        let diff = (next - estimate).abs();
        estimate = next;
        if diff <= rel_tol * next.abs() || diff < 1e-300 {
            break;
        }
    }
    estimate
}
