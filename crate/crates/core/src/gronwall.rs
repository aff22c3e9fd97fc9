//! Mittag-Leffler envelopes for sequences satisfying discrete fractional
//! differential inequalities `𝒟_τ^α v_n ≤ -λ v_n + c` (or `≤ λ v_n + c`),
//! and checks of solver trajectories against them.

use libm::tgamma;

use crate::error::{invalid, Error, Result};
use crate::mesh::Mesh;
use crate::ml::{default_mu1, estimate_sigma_constants, MittagLeffler};
use crate::schemes::{estimate_nu_rho1, SchemeKernel};

/// Relative tolerance of [`verify_trajectory`].
pub const VERIFY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeVariant {
    /// Upper bound `(v0 - c/λ) E_α(-λ t^α / ν) + c/λ`, needs `v0 ≤ c/λ`.
    UniformBound,
    /// Lower bound with the same formula, needs `v0 > c/λ`.
    DecayLower,
    /// Upper bound `(v0 - c/λ) E_α(-λ t^α / ρ) + c/λ` with `ρ = ρ₁/(1-α)`.
    DecayUpperBasic,
    /// As above with `ρ = min(ρ₁/(1-α), ρ₁σ)`, needs `λ τ_n^α ≤ 1`.
    DecayUpperStepRestricted,
    /// Upper bound `(v0 + c/λ) E_α(λ t^α / μ) - c/λ` for growing sequences,
    /// needs `λ τ_n^α < min(μ, ν/Γ(2-α))`.
    GrowingLinear,
    /// Upper bound `v0 + c t^α / (ν Γ(1+α))` when `λ = 0`.
    LambdaZero,
}

impl EnvelopeVariant {
    pub fn is_lower(self) -> bool {
        self == EnvelopeVariant::DecayLower
    }
}

/// Scheme and universal constants entering the envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeConstants {
    pub nu: f64,
    pub rho1: f64,
    pub sigma: f64,
    /// `μ = ν μ₁`.
    pub mu: f64,
}

impl EnvelopeConstants {
    /// `ν`, `ρ₁` from the kernel, `σ` and `μ₁` from the default numerical estimates.
    pub fn for_kernel(kernel: &SchemeKernel) -> Result<Self> {
        let (nu, rho1) = estimate_nu_rho1(kernel)?;
        Ok(Self {
            nu,
            rho1,
            sigma: estimate_sigma_constants().sigma,
            mu: nu * default_mu1(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GronwallEnvelope {
    pub variant: EnvelopeVariant,
    pub alpha: f64,
    pub lambda: f64,
    pub c: f64,
    pub v0: f64,
    pub constants: EnvelopeConstants,
    pub mesh: Mesh,
}

impl GronwallEnvelope {
    /// Builds an envelope after checking the variant's hypotheses.
    pub fn new(
        variant: EnvelopeVariant,
        alpha: f64,
        lambda: f64,
        c: f64,
        v0: f64,
        constants: EnvelopeConstants,
        mesh: Mesh,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be nonnegative, got {lambda}")));
        }
        let k = constants;
        if !(k.nu > 0.0 && k.rho1 > 0.0 && k.sigma > 0.0 && k.mu > 0.0) {
            return Err(invalid("constants", "nu, rho1, sigma and mu must be positive"));
        }
        let env = Self {
            variant,
            alpha,
            lambda,
            c,
            v0,
            constants,
            mesh,
        };
        env.check_hypotheses()?;
        Ok(env)
    }

    fn max_lambda_tau_alpha(&self) -> f64 {
        self.lambda * self.mesh.max_step().powf(self.alpha)
    }

    fn check_hypotheses(&self) -> Result<()> {
        use EnvelopeVariant::*;
        let (l, c, v0) = (self.lambda, self.c, self.v0);
        if self.variant == LambdaZero {
            if l != 0.0 {
                return Err(Error::Hypothesis(format!("LambdaZero needs lambda = 0, got {l}")));
            }
            return Ok(());
        }
        if !(l > 0.0) {
            return Err(Error::Hypothesis(format!("{:?} needs lambda > 0", self.variant)));
        }
        match self.variant {
            UniformBound if v0 > c / l => Err(Error::Hypothesis(format!(
                "v0 <= c/lambda violated: {v0} > {}",
                c / l
            ))),
            DecayLower | DecayUpperBasic | DecayUpperStepRestricted if v0 <= c / l => {
                Err(Error::Hypothesis(format!(
                    "v0 > c/lambda violated: {v0} <= {}",
                    c / l
                )))
            }
            DecayUpperStepRestricted if self.max_lambda_tau_alpha() > 1.0 => {
                Err(Error::Hypothesis(format!(
                    "lambda*tau_n^alpha <= 1 violated: max is {}",
                    self.max_lambda_tau_alpha()
                )))
            }
            GrowingLinear => {
                let bound = self
                    .constants
                    .mu
                    .min(self.constants.nu / tgamma(2.0 - self.alpha));
                let lt = self.max_lambda_tau_alpha();
                if lt < bound {
                    Ok(())
                } else {
                    Err(Error::Hypothesis(format!(
                        "lambda*tau_n^alpha < min(mu, nu/Gamma(2-alpha)) violated: {lt} >= {bound}"
                    )))
                }
            }
            _ => Ok(()),
        }
    }

    /// `ρ` used by the decay upper bounds.
    pub fn rho(&self) -> f64 {
        let k = &self.constants;
        let basic = k.rho1 / (1.0 - self.alpha);
        match self.variant {
            EnvelopeVariant::DecayUpperStepRestricted => basic.min(k.rho1 * k.sigma),
            _ => basic,
        }
    }

    /// Envelope at `t_n`.
    pub fn value(&self, n: usize) -> f64 {
        let t = self.mesh.t(n);
        let ta = t.powf(self.alpha);
        let e = MittagLeffler::classical(self.alpha).expect("alpha validated");
        let (l, c, v0, k) = (self.lambda, self.c, self.v0, &self.constants);
        match self.variant {
            EnvelopeVariant::LambdaZero => v0 + c * ta / (k.nu * tgamma(1.0 + self.alpha)),
            EnvelopeVariant::UniformBound | EnvelopeVariant::DecayLower => {
                (v0 - c / l) * e.eval(-l * ta / k.nu) + c / l
            }
            EnvelopeVariant::DecayUpperBasic | EnvelopeVariant::DecayUpperStepRestricted => {
                (v0 - c / l) * e.eval(-l * ta / self.rho()) + c / l
            }
            EnvelopeVariant::GrowingLinear => (v0 + c / l) * e.eval(l * ta / k.mu) - c / l,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..=self.mesh.len()).map(|n| self.value(n)).collect()
    }
}

/// Envelope at `t_n`.
pub fn envelope_value(env: &GronwallEnvelope, n: usize) -> f64 {
    env.value(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Upper,
    Lower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub pass: bool,
    /// `max_n (v_n - env_n)` for upper bounds, `max_n (env_n - v_n)` for lower.
    pub max_violation: f64,
    /// Index attaining `max_violation`.
    pub worst_index: usize,
    /// Number of indices beyond tolerance.
    pub violations: usize,
}

/// Compares `v_0..=v_N` with the envelope; passes when every signed
/// violation is at most `1e-9 (1 + |env_n|)`.
pub fn verify_trajectory(
    env: &GronwallEnvelope,
    v: &[f64],
    direction: Direction,
) -> Result<VerificationReport> {
    if v.len() != env.mesh.len() + 1 {
        return Err(Error::SizeMismatch {
            left: env.mesh.len() + 1,
            right: v.len(),
        });
    }
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst_index = 0;
    let mut violations = 0;
    for (n, &vn) in v.iter().enumerate() {
        let e = env.value(n);
        let d = match direction {
            Direction::Upper => vn - e,
            Direction::Lower => e - vn,
        };
        if d > max_violation {
            max_violation = d;
            worst_index = n;
        }
        if !(d <= VERIFY_TOL * (1.0 + e.abs())) {
            violations += 1;
        }
    }
    Ok(VerificationReport {
        pass: violations == 0,
        max_violation,
        worst_index,
        violations,
    })
}

/// `𝒟_τ^α` applied to `t_j^α / Γ(1+α)`, evaluated at `n ≥ 1`.
pub fn dalpha_of_power(kernel: &SchemeKernel, n: usize) -> f64 {
    let a = kernel.alpha;
    let g = tgamma(1.0 + a);
    let m = &kernel.mesh;
    (1..=n)
        .map(|j| kernel.c.at(n, j) * (m.t(j).powf(a) - m.t(j - 1).powf(a)) / g)
        .sum()
}

/// Least-squares slope of `log v` against `log t` over the last decade
/// `t ≥ t_N / 10`.
pub fn decay_rate_fit(t: &[f64], v: &[f64]) -> Result<f64> {
    if t.len() != v.len() {
        return Err(Error::SizeMismatch {
            left: t.len(),
            right: v.len(),
        });
    }
    let t_end = *t
        .last()
        .ok_or_else(|| Error::InsufficientData("empty trajectory".into()))?;
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(v)
        .filter(|(&ti, _)| ti > 0.0 && ti >= t_end / 10.0)
        .map(|(&ti, &vi)| (ti, vi))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} points in the final decade, need at least 3",
            pts.len()
        )));
    }
    if let Some(&(ti, vi)) = pts.iter().find(|(_, vi)| !(*vi > 0.0)) {
        return Err(Error::InsufficientData(format!(
            "nonpositive value {vi} at t = {ti}"
        )));
    }
    let k = pts.len() as f64;
    let (sx, sy) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (ti, vi)| (a + ti.ln(), b + vi.ln()));
    let (mx, my) = (sx / k, sy / k);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (ti, vi) in &pts {
        let dx = ti.ln() - mx;
        sxy += dx * (vi.ln() - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData("final decade has a single time".into()));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{graded_mesh, uniform_mesh};
    use crate::ml::ml;
    use crate::schemes::l1_kernel;

    fn unit_constants() -> EnvelopeConstants {
        EnvelopeConstants {
            nu: 1.0,
            rho1: 1.0,
            sigma: 46.0,
            mu: 0.36,
        }
    }

    #[test]
    fn envelopes_start_at_v0() {
        let m = uniform_mesh(1.0, 8).unwrap();
        use EnvelopeVariant::*;
        for (v, l, c, v0) in [
            (UniformBound, 2.0, 1.0, 0.3),
            (DecayLower, 2.0, 0.0, 1.0),
            (DecayUpperBasic, 2.0, 0.0, 1.0),
            (DecayUpperStepRestricted, 1.0, 0.0, 1.0),
            (GrowingLinear, 0.5, 1.0, 1.0),
            (LambdaZero, 0.0, 1.0, 0.7),
        ] {
            let e = GronwallEnvelope::new(v, 0.5, l, c, v0, unit_constants(), m.clone()).unwrap();
            assert!((e.value(0) - v0).abs() < 1e-15, "{v:?}");
        }
    }

    #[test]
    fn lambda_zero_value() {
        let m = uniform_mesh(1.0, 1).unwrap();
        let e = GronwallEnvelope::new(EnvelopeVariant::LambdaZero, 0.5, 0.0, 1.0, 2.0, unit_constants(), m)
            .unwrap();
        assert!((e.value(1) - 2.0 - std::f64::consts::FRAC_2_SQRT_PI).abs() < 1e-14);
    }

    #[test]
    fn uniform_bound_approaches_limit() {
        let m = graded_mesh(1e4, 200, 2.0).unwrap();
        let e = GronwallEnvelope::new(EnvelopeVariant::UniformBound, 0.5, 1.0, 1.0, 0.0, unit_constants(), m)
            .unwrap();
        let v = e.values();
        assert!(v.windows(2).all(|w| w[1] >= w[0]));
        assert!((v[200] - 1.0).abs() < 0.01);
    }

    #[test]
    fn hypotheses_are_checked() {
        let m = uniform_mesh(1.0, 4).unwrap();
        let k = unit_constants();
        use EnvelopeVariant::*;
        assert!(matches!(
            GronwallEnvelope::new(UniformBound, 0.5, 1.0, 0.0, 1.0, k, m.clone()),
            Err(Error::Hypothesis(_))
        ));
        assert!(matches!(
            GronwallEnvelope::new(DecayLower, 0.5, 1.0, 2.0, 1.0, k, m.clone()),
            Err(Error::Hypothesis(_))
        ));
        assert!(matches!(
            GronwallEnvelope::new(DecayUpperStepRestricted, 0.5, 3.0, 0.0, 1.0, k, m.clone()),
            Err(Error::Hypothesis(_))
        ));
        assert!(matches!(
            GronwallEnvelope::new(GrowingLinear, 0.5, 1.0, 0.0, 1.0, k, m.clone()),
            Err(Error::Hypothesis(_))
        ));
        assert!(matches!(
            GronwallEnvelope::new(LambdaZero, 0.5, 1.0, 0.0, 1.0, k, m),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn rho_branches() {
        let m = uniform_mesh(1.0, 4).unwrap();
        let k = unit_constants();
        let e = GronwallEnvelope::new(EnvelopeVariant::DecayUpperBasic, 0.99, 1.0, 0.0, 1.0, k, m.clone()).unwrap();
        assert!((e.rho() - 100.0).abs() < 1e-9);
        let e = GronwallEnvelope::new(EnvelopeVariant::DecayUpperStepRestricted, 0.99, 1.0, 0.0, 1.0, k, m).unwrap();
        assert_eq!(e.rho(), 46.0);
    }

    #[test]
    fn dalpha_of_power_examples() {
        let m = uniform_mesh(1.0, 1).unwrap();
        let k = l1_kernel(0.5, &m).unwrap();
        let v = dalpha_of_power(&k, 1);
        assert!((v - 4.0 / std::f64::consts::PI).abs() < 1e-14);
        let mut k2 = k.clone();
        k2.c = k2.c.scaled(2.0);
        assert!((dalpha_of_power(&k2, 1) - 2.0 * v).abs() < 1e-14);
    }

    #[test]
    fn decay_fit_examples() {
        let m = graded_mesh(1e4, 400, 2.0).unwrap();
        let t = m.points();
        let v: Vec<f64> = t.iter().map(|&x| if x > 0.0 { x.powf(-0.5) } else { 1.0 }).collect();
        assert!((decay_rate_fit(t, &v).unwrap() + 0.5).abs() < 1e-10);
        let v: Vec<f64> = t.iter().map(|&x| ml(0.5, 1.0, -x.sqrt()).unwrap()).collect();
        assert!((decay_rate_fit(t, &v).unwrap() + 0.5).abs() < 0.05);
        let m = graded_mesh(1e6, 400, 2.0).unwrap();
        let t = m.points();
        let v: Vec<f64> = t.iter().map(|&x| ml(0.3, 1.0, -x.powf(0.3)).unwrap()).collect();
        assert!((decay_rate_fit(t, &v).unwrap() + 0.3).abs() < 0.05);
        assert!(decay_rate_fit(&[0.0, 1.0], &[1.0, 1.0]).is_err());
        assert!(decay_rate_fit(&[0.0, 9.0, 9.5, 10.0], &[1.0, 1.0, -1.0, 1.0]).is_err());
    }
}
