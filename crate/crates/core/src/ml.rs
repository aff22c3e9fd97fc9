//! Mittag-Leffler functions `E_{α,β}(z) = Σ_k z^k / Γ(αk + β)` for real `z`,
//! the exact solution of the linear Caputo equation, and numerical estimates
//! of the universal constants used by the Grönwall envelopes.
//!
//! Evaluation picks one of three branches:
//!
//! * the power series, for moderate `|z|` when it converges without losing
//!   more than two digits to cancellation;
//! * the asymptotic expansion `Σ_{k≥1} (-1)^{k+1} x^{-k} / Γ(β - αk)` for
//!   `z = -x` with `x ≥ 100`;
//! * a real spectral integral otherwise. Rotating the Hankel contour onto
//!   the rays `arg ζ = ±απ` and substituting `s = r^{1/α}` gives
//!
//!   `E_{α,β}(z) = [z > 0] α^{-1} z^{(1-β)/α} e^{z^{1/α}} +
//!   π^{-1} ∫_0^∞ e^{-s} s^{α-β} (s^α sin π(1-β) - z sin π(1-β+α))
//!   / (s^{2α} - 2 s^α z cos απ + z²) ds`,
//!
//!   valid for `0 < α < 1`, `0 < β < 1 + α`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;
use libm::{lgamma as ln_gamma, tgamma as gamma};

use crate::error::{invalid, Error, Result};
use crate::quad;

/// Largest `|z|` for which the series is tried on the negative axis.
pub const SERIES_MAX_ABS: f64 = 5.0;
/// Smallest `x` for which the asymptotic expansion of `E_{α,β}(-x)` is used.
pub const ASYMPTOTIC_MIN_ABS: f64 = 100.0;
/// Largest tolerated ratio between the biggest series term and the sum.
pub const SERIES_CANCELLATION_LIMIT: f64 = 1e2;

const SERIES_MAX_TERMS: usize = 400;
const SERIES_REL_STOP: f64 = 1e-18;
const QUAD_TOL: f64 = 1e-14;

/// `sin(πx)` with exact zeros at the integers.
pub(crate) fn sinpi(x: f64) -> f64 {
    let mut r = x - 2.0 * (x / 2.0).floor();
    let mut sign = 1.0;
    if r >= 1.0 {
        r -= 1.0;
        sign = -1.0;
    }
    if r > 0.5 {
        r = 1.0 - r;
    }
    let v = if r <= 0.25 {
        (PI * r).sin()
    } else {
        (PI * (0.5 - r)).cos()
    };
    sign * v
}

/// `cos(πx)` with exact zeros at the half-integers.
pub(crate) fn cospi(x: f64) -> f64 {
    sinpi(x + 0.5)
}

/// `Γ(x)`, exact at the positive integers.
pub fn gamma_fn(x: f64) -> f64 {
    if x == x.floor() && (1.0..=171.0).contains(&x) {
        let mut f = 1.0;
        let mut k = 2.0;
        while k < x {
            f *= k;
            k += 1.0;
        }
        return f;
    }
    gamma(x)
}

/// `1/Γ(x)`, zero at the poles of Γ.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    if x < 0.5 {
        // reflection: 1/Γ(x) = sin(πx) Γ(1-x) / π
        return sinpi(x) * gamma_fn(1.0 - x) / PI;
    }
    if x > 170.0 {
        return (-ln_gamma(x)).exp();
    }
    1.0 / gamma_fn(x)
}

/// Outcome of a direct power-series summation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSum {
    pub value: f64,
    /// Largest term magnitude encountered, a proxy for cancellation error.
    pub max_term: f64,
    pub terms: usize,
    pub converged: bool,
}

impl SeriesSum {
    /// Whether the sum converged without catastrophic cancellation.
    pub fn is_reliable(&self) -> bool {
        self.converged && self.max_term <= SERIES_CANCELLATION_LIMIT * self.value.abs()
    }
}

/// Parameters `(α, β)` of a Mittag-Leffler function; `0 < α ≤ 1`, `β > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MittagLeffler {
    alpha: f64,
    beta: f64,
}

impl MittagLeffler {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(invalid("alpha", format!("must lie in (0, 1], got {alpha}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid("beta", format!("must be positive, got {beta}")));
        }
        if alpha == 1.0 && beta != beta.floor() {
            return Err(invalid(
                "beta",
                format!("must be a positive integer when alpha = 1, got {beta}"),
            ));
        }
        Ok(Self { alpha, beta })
    }

    /// `E_α = E_{α,1}`.
    pub fn classical(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Evaluates `E_{α,β}(z)`.
    pub fn eval(&self, z: f64) -> f64 {
        if z.is_nan() {
            return f64::NAN;
        }
        if z == 0.0 {
            return rgamma(self.beta);
        }
        if self.alpha == 1.0 {
            return self.eval_alpha_one(z);
        }
        if z > 0.0 {
            let s = self.series(z);
            if s.converged {
                return s.value;
            }
            return self.integral(z);
        }
        let x = -z;
        if x >= ASYMPTOTIC_MIN_ABS {
            if let Some(v) = self.asymptotic(z) {
                return v;
            }
        }
        if x <= SERIES_MAX_ABS {
            let s = self.series(z);
            if s.is_reliable() {
                return s.value;
            }
        }
        self.integral(z)
    }

    // α = 1 with integer β: exp and the upward recurrence
    // E_{1,m+1}(z) = (E_{1,m}(z) - 1/Γ(m)) / z.
    fn eval_alpha_one(&self, z: f64) -> f64 {
        if self.beta == 1.0 {
            return z.exp();
        }
        if z.abs() < SERIES_MAX_ABS {
            return self.series(z).value;
        }
        let mut e = z.exp();
        let mut m = 1.0;
        while m < self.beta {
            e = (e - rgamma(m)) / z;
            m += 1.0;
        }
        e
    }

    /// Direct summation of the defining power series.
    pub fn series(&self, z: f64) -> SeriesSum {
        let (a, b) = (self.alpha, self.beta);
        let lnx = z.abs().ln();
        let mut sum = 0.0;
        let mut max_term: f64 = 0.0;
        let mut prev = f64::INFINITY;
        for k in 0..SERIES_MAX_TERMS {
            let arg = a * k as f64 + b;
            let term = if k == 0 {
                rgamma(b)
            } else {
                let lnmag = k as f64 * lnx;
                let mag = if arg < 170.0 && lnmag < 700.0 {
                    z.abs().powi(k as i32) / gamma_fn(arg)
                } else {
                    (lnmag - ln_gamma(arg)).exp()
                };
                if z < 0.0 && k % 2 == 1 {
                    -mag
                } else {
                    mag
                }
            };
            sum += term;
            let mag = term.abs();
            max_term = max_term.max(mag);
            if !sum.is_finite() {
                return SeriesSum {
                    value: sum,
                    max_term,
                    terms: k + 1,
                    converged: false,
                };
            }
            if k > 0 && mag <= prev && mag < SERIES_REL_STOP * (sum.abs() + 1e-300) {
                return SeriesSum {
                    value: sum,
                    max_term,
                    terms: k + 1,
                    converged: true,
                };
            }
            prev = mag;
        }
        SeriesSum {
            value: sum,
            max_term,
            terms: SERIES_MAX_TERMS,
            converged: false,
        }
    }

    /// Asymptotic expansion of `E_{α,β}(z)` for large negative `z`.
    ///
    /// Returns `None` when the terms stop decreasing before reaching full
    /// precision, or when `z ≥ 0` or `α = 1`.
    pub fn asymptotic(&self, z: f64) -> Option<f64> {
        if z >= 0.0 || self.alpha >= 1.0 {
            return None;
        }
        let x = -z;
        let lnx = x.ln();
        let mut sum = 0.0;
        let mut prev = f64::INFINITY;
        for k in 1..=80 {
            let c = rgamma(self.beta - self.alpha * k as f64);
            if c == 0.0 {
                continue;
            }
            let mag = (-(k as f64) * lnx).exp() * c.abs();
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 } * c.signum();
            if mag > prev {
                return None;
            }
            sum += sign * mag;
            if mag <= 1e-17 * sum.abs() {
                return Some(sum);
            }
            prev = mag;
        }
        None
    }

    /// Spectral-integral evaluation (requires `α < 1`).
    ///
    /// For `β ≥ 1 + α` the recurrence `E_{α,β}(z) = (E_{α,β-α}(z) - 1/Γ(β-α)) / z`
    /// lowers `β` into the admissible range first.
    pub fn integral(&self, z: f64) -> f64 {
        assert!(self.alpha < 1.0, "spectral integral needs alpha < 1");
        if z == 0.0 {
            return rgamma(self.beta);
        }
        if self.beta >= 1.0 + self.alpha {
            let lower = Self {
                alpha: self.alpha,
                beta: self.beta - self.alpha,
            };
            return (lower.integral(z) - rgamma(lower.beta)) / z;
        }
        let (a, b) = (self.alpha, self.beta);
        let (sin_a, cos_a) = (sinpi(a), cospi(a));
        let s1 = sinpi(1.0 - b);
        let s2 = sinpi(1.0 - b + a);
        let integrand = |s: f64| -> f64 {
            let u = s.powf(a);
            let num = u * s1 - z * s2;
            let den = u * u - 2.0 * u * z * cos_a + z * z;
            (-s).exp() * s.powf(a - b) * num / den
        };

        // The denominator peaks where s^α = z cos(απ); split around it.
        let mut cuts: Vec<f64> = Vec::new();
        let up = z * cos_a;
        if up > 0.0 {
            let wu = (z * sin_a).abs();
            for m in [-16.0, -4.0, -1.0, -0.25, 0.0, 0.25, 1.0, 4.0, 16.0] {
                let u = up + m * wu;
                if u > 0.0 {
                    cuts.push(u.powf(1.0 / a));
                }
            }
        }
        cuts.push(1.0);
        let zs = z.abs().powf(1.0 / a);
        if zs.is_finite() {
            cuts.push(zs);
        }
        cuts.retain(|&s| s > 0.0 && s < 740.0);
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * y.abs());

        let mut total = 0.0;
        let mut left = 0.0;
        for &right in &cuts {
            total += quad::tanh_sinh(
                |s, _, _| integrand(s),
                left,
                right,
                QUAD_TOL,
            );
            left = right;
        }
        total += quad::exp_sinh(|s, _| integrand(s), left, QUAD_TOL);
        let mut value = total / PI;
        if z > 0.0 {
            value += z.powf((1.0 - b) / a) * z.powf(1.0 / a).exp() / a;
        }
        value
    }
}

/// `E_{α,β}(z)` with parameter validation.
pub fn ml(alpha: f64, beta: f64, z: f64) -> Result<f64> {
    Ok(MittagLeffler::new(alpha, beta)?.eval(z))
}

/// Exact solution of `D^α v = λ v + c`, `v(0) = v0`:
/// `(v0 + c/λ) E_α(λ t^α) - c/λ`, and `v0 + c t^α / Γ(1+α)` when `λ = 0`.
pub fn linear_fode_exact(alpha: f64, lambda: f64, c: f64, v0: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid("t", format!("must be nonnegative, got {t}")));
    }
    let e = MittagLeffler::classical(alpha)?;
    if lambda == 0.0 {
        return Ok(v0 + c * t.powf(alpha) * rgamma(1.0 + alpha));
    }
    let shift = c / lambda;
    Ok((v0 + shift) * e.eval(lambda * t.powf(alpha)) - shift)
}

/// Bounds `c1 ≤ α⁻¹ E_{α,α}(-z) ≤ c2` over `α ∈ [1/2, 1-ε]`, `z ∈ [0, 3]`,
/// and the derived constant `σ = 2 c2 / c1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaConstants {
    pub c1: f64,
    pub c2: f64,
    pub sigma: f64,
    /// `(α, z)` where the minimum was found.
    pub argmin: (f64, f64),
    /// `(α, z)` where the maximum was found.
    pub argmax: (f64, f64),
}

pub const SIGMA_ALPHA_EPS: f64 = 1e-3;

// Series accepted with up to six digits of cancellation (still ~1e-10
// relative), which keeps the dense grid cheap.
fn grid_eval(e: &MittagLeffler, z: f64) -> f64 {
    let s = e.series(z);
    if s.converged && s.max_term <= 1e6 * s.value.abs() {
        s.value
    } else {
        e.eval(z)
    }
}

/// Grid search for the σ constants with the given spacings (at most 1e-3
/// each for the default estimate).
pub fn estimate_sigma_constants_with(alpha_step: f64, z_step: f64) -> Result<SigmaConstants> {
    if !(alpha_step > 0.0 && z_step > 0.0) {
        return Err(invalid("step", "grid spacings must be positive"));
    }
    let a_hi = 1.0 - SIGMA_ALPHA_EPS;
    let na = ((a_hi - 0.5) / alpha_step).ceil() as usize;
    let nz = (3.0 / z_step).ceil() as usize;
    let alphas: Vec<f64> = (0..=na)
        .map(|i| 0.5 + (a_hi - 0.5) * i as f64 / na as f64)
        .collect();
    let rows: Vec<((f64, f64, f64), (f64, f64, f64))> = alphas
        .par_iter()
        .map(|&alpha| {
            let e = MittagLeffler::new(alpha, alpha).expect("alpha in range");
            let mut lo = (f64::INFINITY, alpha, 0.0);
            let mut hi = (f64::NEG_INFINITY, alpha, 0.0);
            for j in 0..=nz {
                let z = 3.0 * j as f64 / nz as f64;
                let v = grid_eval(&e, -z) / alpha;
                if v < lo.0 {
                    lo = (v, alpha, z);
                }
                if v > hi.0 {
                    hi = (v, alpha, z);
                }
            }
            (lo, hi)
        })
        .collect();
    let lo = rows
        .iter()
        .map(|r| r.0)
        .min_by(|x, y| x.0.partial_cmp(&y.0).unwrap())
        .unwrap();
    let hi = rows
        .iter()
        .map(|r| r.1)
        .max_by(|x, y| x.0.partial_cmp(&y.0).unwrap())
        .unwrap();
    if !(lo.0 > 0.0) {
        return Err(Error::InsufficientData(format!(
            "c1 must be positive, got {}",
            lo.0
        )));
    }
    let sigma = 2.0 * hi.0 / lo.0;
    debug_assert!(sigma > 1.0);
    Ok(SigmaConstants {
        c1: lo.0,
        c2: hi.0,
        sigma,
        argmin: (lo.1, lo.2),
        argmax: (hi.1, hi.2),
    })
}

/// σ constants on the default 1e-3 grid, computed once per process.
pub fn estimate_sigma_constants() -> SigmaConstants {
    static CACHE: OnceLock<SigmaConstants> = OnceLock::new();
    *CACHE.get_or_init(|| {
        estimate_sigma_constants_with(1e-3, 1e-3).expect("default sigma grid is valid")
    })
}

/// `w(t) = d/dt E_α(λ t^α) = λ t^{α-1} E_{α,α}(λ t^α)` for `λ > 0`.
pub fn growth_rate(alpha: f64, lambda: f64, t: f64) -> f64 {
    if alpha == 1.0 {
        return lambda * (lambda * t).exp();
    }
    let e = MittagLeffler::new(alpha, alpha).expect("alpha in (0,1)");
    lambda * t.powf(alpha - 1.0) * e.eval(lambda * t.powf(alpha))
}

fn ln_growth_slope(alpha: f64, lambda: f64, t: f64) -> f64 {
    let h = 1e-4 * t;
    let f = |s: f64| growth_rate(alpha, lambda, s).ln();
    (f(t + h) - f(t - h)) / (2.0 * h)
}

/// Sampling plan for [`estimate_mu1`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mu1Grid {
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Points of the logarithmic scan used to bracket the transition point,
    /// in the scaled variable `λ^{1/α} t`.
    pub bracket_points: usize,
    pub bracket_max: f64,
    /// Logarithmic samples of `s` in `[t_*, s_max]` (scaled variable).
    pub s_points: usize,
    pub s_max: f64,
    /// Uniform samples of the scaled step `τ' ∈ (0, 1]`.
    pub tau_points: usize,
}

impl Default for Mu1Grid {
    fn default() -> Self {
        Self {
            alphas: (2..=19).map(|k| k as f64 * 0.05).collect(),
            lambdas: vec![0.5, 1.0, 2.0],
            bracket_points: 400,
            bracket_max: 50.0,
            s_points: 120,
            s_max: 200.0,
            tau_points: 16,
        }
    }
}

impl Mu1Grid {
    /// The same plan with every sample count doubled.
    pub fn refined(&self) -> Self {
        Self {
            bracket_points: self.bracket_points * 2,
            s_points: self.s_points * 2,
            tau_points: self.tau_points * 2,
            ..self.clone()
        }
    }
}

/// Result of [`estimate_mu1`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mu1Estimate {
    pub mu1: f64,
    /// `(α, λ, s, τ')` at which the smallest ratio occurred.
    pub worst: (f64, f64, f64, f64),
    /// `(α, λ, t_*)` for every sampled pair.
    pub transition_points: Vec<(f64, f64, f64)>,
}

/// Transition point `t_*` where `w(t) = d/dt E_α(λ t^α)` switches from
/// decreasing to increasing, located by a sign change of `w'` on a
/// logarithmic scan followed by bisection.
pub fn transition_point(
    alpha: f64,
    lambda: f64,
    bracket_points: usize,
    bracket_max: f64,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1], got {alpha}")));
    }
    if !(lambda > 0.0) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    if alpha == 1.0 {
        return Ok(0.0);
    }
    let scale = lambda.powf(1.0 / alpha);
    let lo_s = 1e-4;
    let ratio = (bracket_max / lo_s).powf(1.0 / bracket_points.max(1) as f64);
    let mut prev_t = lo_s / scale;
    let mut prev_d = ln_growth_slope(alpha, lambda, prev_t);
    if prev_d >= 0.0 {
        return Err(Error::InsufficientData(format!(
            "w is not decreasing at the start of the scan (alpha={alpha})"
        )));
    }
    for i in 1..=bracket_points {
        let t = lo_s * ratio.powi(i as i32) / scale;
        let d = ln_growth_slope(alpha, lambda, t);
        if d > 0.0 {
            let (mut a, mut b) = (prev_t, t);
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                if ln_growth_slope(alpha, lambda, m) < 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Ok(0.5 * (a + b));
        }
        prev_t = t;
        prev_d = d;
    }
    let _ = prev_d;
    Err(Error::InsufficientData(format!(
        "no sign change of w' bracketed on (0, {bracket_max}] for alpha={alpha}; refine the scan"
    )))
}

/// Estimates the universal constant `μ₁ ∈ (0, 1)`: the infimum of
/// `w(s)/w(s+τ')` over `s ≥ t_*` and `λ τ'^α ≤ 1`.
pub fn estimate_mu1(grid: &Mu1Grid) -> Result<Mu1Estimate> {
    if grid.alphas.is_empty() || grid.lambdas.is_empty() {
        return Err(invalid("grid", "needs at least one alpha and one lambda"));
    }
    if grid.s_points < 2 || grid.tau_points < 1 {
        return Err(invalid("grid", "too few s or tau samples"));
    }
    if grid.s_max > 600.0 {
        return Err(invalid("s_max", "must stay below 600 to avoid overflow"));
    }
    let pairs: Vec<(f64, f64)> = grid
        .alphas
        .iter()
        .flat_map(|&a| grid.lambdas.iter().map(move |&l| (a, l)))
        .collect();
    let results: Vec<Result<(f64, (f64, f64, f64, f64), f64)>> = pairs
        .par_iter()
        .map(|&(alpha, lambda)| {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(invalid("alpha", format!("must lie in (0, 1], got {alpha}")));
            }
            let t_star = transition_point(alpha, lambda, grid.bracket_points, grid.bracket_max)?;
            let scale = lambda.powf(1.0 / alpha);
            let s_lo = (t_star * scale).max(1e-6);
            let mut best = (f64::INFINITY, (alpha, lambda, 0.0, 0.0));
            for i in 0..grid.s_points {
                let frac = i as f64 / (grid.s_points - 1) as f64;
                let s = s_lo * (grid.s_max / s_lo).powf(frac) / scale;
                let ws = growth_rate(alpha, lambda, s);
                for k in 1..=grid.tau_points {
                    let tau = k as f64 / grid.tau_points as f64 / scale;
                    let r = ws / growth_rate(alpha, lambda, s + tau);
                    if r < best.0 {
                        best = (r, (alpha, lambda, s, tau));
                    }
                }
            }
            Ok((best.0, best.1, t_star))
        })
        .collect();
    let mut mu1 = f64::INFINITY;
    let mut worst = (0.0, 0.0, 0.0, 0.0);
    let mut transition_points = Vec::with_capacity(results.len());
    for (r, &(alpha, lambda)) in results.into_iter().zip(&pairs) {
        let (ratio, at, t_star) = r?;
        transition_points.push((alpha, lambda, t_star));
        if ratio < mu1 {
            mu1 = ratio;
            worst = at;
        }
    }
    Ok(Mu1Estimate {
        mu1,
        worst,
        transition_points,
    })
}

/// `μ₁` on the default grid, computed once per process.
pub fn default_mu1() -> f64 {
    static CACHE: OnceLock<f64> = OnceLock::new();
    *CACHE.get_or_init(|| {
        estimate_mu1(&Mu1Grid::default())
            .expect("default mu1 grid brackets every transition point")
            .mu1
    })
}
