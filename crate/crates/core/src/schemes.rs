//! Discretization kernels of the Caputo derivative on arbitrary meshes and
//! their complete-positivity certification.
//!
//! A differential-form scheme reads `Σ_j c_{n-j}^n ∇u_j = F_n`. Its kernel
//! `C` determines `B = C ⋆ L⁻¹` (so `b_0^n = c_0^n`,
//! `b_{n-j}^n = c_{n-j}^n - c_{n-j-1}^n`) and the integral-form kernel
//! `A = B⁻¹`. The scheme is completely positive when `B` has a positive
//! diagonal, nonpositive off-diagonals and nonnegative row sums.

use libm::tgamma;

use crate::error::{invalid, Error, Result};
use crate::kernel::{invert, resolvent, right_complementary, TriKernel};
use crate::mesh::Mesh;

/// Zero boundary of the sign checks, relative to the row's largest entry.
pub const SIGN_TOL: f64 = 1e-13;

/// Default λ probes of the resolvent test.
pub const DEFAULT_LAMBDAS: [f64; 3] = [0.01, 1.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeFamily {
    L1,
    IntegralForm,
    CrankNicolsonL1Plus,
    /// Weights supplied directly, e.g. read from a kernel file.
    Custom,
}

/// A differential-form kernel bound to its mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeKernel {
    pub alpha: f64,
    pub mesh: Mesh,
    pub family: SchemeFamily,
    /// Weights `c_{n-j}^n`.
    pub c: TriKernel,
    /// Weight of the new time level in the right-hand side.
    pub theta: f64,
    /// Unmodified `χ_{n-j}^n` (Crank-Nicolson family only).
    pub chi: Option<TriKernel>,
    /// Integral-form kernel `A` when the scheme was built from it.
    pub integral: Option<TriKernel>,
}

impl SchemeKernel {
    /// Implicit scheme with user-supplied weights `c_{n-j}^n` on `mesh`.
    pub fn custom(alpha: f64, mesh: &Mesh, c: TriKernel) -> Result<Self> {
        check_alpha(alpha)?;
        if c.n_rows() != mesh.len() {
            return Err(Error::SizeMismatch {
                left: c.n_rows(),
                right: mesh.len(),
            });
        }
        Ok(Self {
            alpha,
            mesh: mesh.clone(),
            family: SchemeFamily::Custom,
            c,
            theta: 1.0,
            chi: None,
            integral: None,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.mesh.len()
    }

    /// `B = C ⋆ L⁻¹`.
    pub fn b_kernel(&self) -> TriKernel {
        differential_to_b(&self.c)
    }

    /// `A = B⁻¹`, the kernel of the equivalent integral form.
    pub fn integral_kernel(&self) -> Result<TriKernel> {
        match &self.integral {
            Some(a) => Ok(a.clone()),
            None => invert(&self.b_kernel()),
        }
    }

    /// Whether `χ_0^n > χ_1^n` for every `n ≥ 2`; `None` outside the
    /// Crank-Nicolson family.
    pub fn chi_monotone(&self) -> Option<bool> {
        self.chi.as_ref().map(chi_diagonal_dominates)
    }

    /// `𝒟_τ^α v` for a sequence `v_0..=v_N`; returns entries `n = 1..=N`.
    pub fn apply_derivative(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_steps();
        if v.len() != n + 1 {
            return Err(Error::SizeMismatch {
                left: n + 1,
                right: v.len(),
            });
        }
        let grad: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
        self.c.apply(&grad)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// `x^p - (x-d)^p` for `0 < d ≤ x` without cancellation.
pub(crate) fn pow_diff(x: f64, d: f64, p: f64) -> f64 {
    if d >= x {
        return x.powf(p);
    }
    -x.powf(p) * (p * (-d / x).ln_1p()).exp_m1()
}

/// `B = C ⋆ L⁻¹`: `b_0^n = c_0^n`, `b_{n-j}^n = c_{n-j}^n - c_{n-j-1}^n`.
pub fn differential_to_b(c: &TriKernel) -> TriKernel {
    TriKernel::from_fn(c.n_rows(), |n, j| {
        if j == n {
            c.at(n, n)
        } else {
            c.at(n, j) - c.at(n, j + 1)
        }
    })
}

/// L1 weights `c_{n-j}^n = [(t_n-t_{j-1})^{1-α} - (t_n-t_j)^{1-α}] / (τ_j Γ(2-α))`,
/// the cell averages of `g_{1-α}(t_n - ·)`.
pub fn l1_kernel(alpha: f64, mesh: &Mesh) -> Result<SchemeKernel> {
    check_alpha(alpha)?;
    let c = average_kernel(alpha, mesh);
    Ok(SchemeKernel {
        alpha,
        mesh: mesh.clone(),
        family: SchemeFamily::L1,
        c,
        theta: 1.0,
        chi: None,
        integral: None,
    })
}

fn average_kernel(alpha: f64, mesh: &Mesh) -> TriKernel {
    let g = tgamma(2.0 - alpha);
    let p = 1.0 - alpha;
    TriKernel::from_fn(mesh.len(), |n, j| {
        let tau = mesh.tau(j);
        pow_diff(mesh.t(n) - mesh.t(j - 1), tau, p) / (tau * g)
    })
}

/// Integral-form weights `a_{n-j}^n = [(t_n-t_{j-1})^α - (t_n-t_j)^α] / Γ(1+α)`,
/// the exact cell integrals of `g_α(t_n - ·)`.
pub fn integral_form_kernel(alpha: f64, mesh: &Mesh) -> Result<TriKernel> {
    check_alpha(alpha)?;
    let g = tgamma(1.0 + alpha);
    Ok(TriKernel::from_fn(mesh.len(), |n, j| {
        pow_diff(mesh.t(n) - mesh.t(j - 1), mesh.tau(j), alpha) / g
    }))
}

/// The integral-form scheme written in differential form, with `C` the
/// right complementary kernel of `A`.
pub fn integral_form_scheme(alpha: f64, mesh: &Mesh) -> Result<SchemeKernel> {
    let a = integral_form_kernel(alpha, mesh)?;
    let c = right_complementary(&a)?;
    Ok(SchemeKernel {
        alpha,
        mesh: mesh.clone(),
        family: SchemeFamily::IntegralForm,
        c,
        theta: 1.0,
        chi: None,
        integral: Some(a),
    })
}

/// `χ_{n-j}^n = (τ_n τ_j)⁻¹ ∫_{t_{n-1}}^{t_n} ∫_{t_{j-1}}^{min(t, t_j)} g_{1-α}(t-s) ds dt`.
pub fn chi_kernel(alpha: f64, mesh: &Mesh) -> Result<TriKernel> {
    check_alpha(alpha)?;
    let g = tgamma(3.0 - alpha);
    let p = 2.0 - alpha;
    Ok(TriKernel::from_fn(mesh.len(), |n, j| {
        let tn = mesh.tau(n);
        if j == n {
            // triangular cell s < t
            return tn.powf(-alpha) / g;
        }
        let tj = mesh.tau(j);
        // second difference of x^{2-α}, as two first differences in t
        let a = mesh.t(n - 1) - mesh.t(j - 1);
        let b = mesh.t(n - 1) - mesh.t(j);
        let da = pow_diff(a + tn, tn, p);
        let db = if b > 0.0 { pow_diff(b + tn, tn, p) } else { tn.powf(p) };
        (da - db) / (tn * tj * g)
    }))
}

/// Crank-Nicolson L1⁺ kernel: `c_0^n = 2χ_0^n`, `c_{n-j}^n = χ_{n-j}^n` otherwise.
pub fn cn_l1plus_kernel(alpha: f64, mesh: &Mesh) -> Result<SchemeKernel> {
    let chi = chi_kernel(alpha, mesh)?;
    let c = TriKernel::from_fn(mesh.len(), |n, j| {
        if j == n {
            2.0 * chi.at(n, n)
        } else {
            chi.at(n, j)
        }
    });
    Ok(SchemeKernel {
        alpha,
        mesh: mesh.clone(),
        family: SchemeFamily::CrankNicolsonL1Plus,
        c,
        theta: 0.5,
        chi: Some(chi),
        integral: None,
    })
}

fn chi_diagonal_dominates(chi: &TriKernel) -> bool {
    (2..=chi.n_rows()).all(|n| chi.entry(n, 0) > chi.entry(n, 1))
}

/// Smallest order `α` (to `tol`) above which `χ_0^n > χ_1^n` holds for all
/// rows of the given mesh, by bisection on `(0, 1)`.
///
/// On uniform meshes this is `2 - log₂3`.
pub fn estimate_alpha_c(mesh: &Mesh, tol: f64) -> Result<f64> {
    let holds = |a: f64| chi_kernel(a, mesh).map(|k| chi_diagonal_dominates(&k));
    let (mut lo, mut hi) = (1e-6, 1.0 - 1e-6);
    if holds(lo)? {
        return Ok(0.0);
    }
    if !holds(hi)? {
        return Err(Error::InsufficientData(
            "chi_0 > chi_1 fails even as alpha -> 1 on this mesh".into(),
        ));
    }
    while hi - lo > tol {
        let m = 0.5 * (lo + hi);
        if holds(m)? {
            hi = m;
        } else {
            lo = m;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Outcome of [`certify`].
#[derive(Debug, Clone, PartialEq)]
pub struct CertificationReport {
    pub is_completely_positive: bool,
    /// Smallest `b_0^n`.
    pub b_diagonal_min: f64,
    /// Largest off-diagonal `b_{n-j}^n` divided by the row's largest magnitude.
    pub b_offdiag_max: f64,
    /// Smallest row sum of `B` divided by the row's largest magnitude.
    pub row_sum_min: f64,
    /// `(λ, pass)` for every resolvent probe.
    pub resolvent_checks: Vec<(f64, bool)>,
    /// Whether the sign test and every resolvent probe reached the same verdict.
    pub tests_agree: bool,
    pub nu: Option<f64>,
    pub rho1: Option<f64>,
    /// `χ_0^n > χ_1^n` for all rows (Crank-Nicolson family only).
    pub chi_monotone: Option<bool>,
}

fn sign_test(b: &TriKernel) -> (bool, f64, f64, f64) {
    let mut diag_min = f64::INFINITY;
    let mut off_max = f64::NEG_INFINITY;
    let mut sum_min = f64::INFINITY;
    for n in 1..=b.n_rows() {
        let row = b.row(n);
        let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        diag_min = diag_min.min(row[n - 1]);
        for v in &row[..n - 1] {
            off_max = off_max.max(v / scale);
        }
        sum_min = sum_min.min(row.iter().sum::<f64>() / scale);
    }
    if off_max == f64::NEG_INFINITY {
        off_max = 0.0;
    }
    let pass = diag_min > 0.0 && off_max <= SIGN_TOL && sum_min >= -SIGN_TOL;
    (pass, diag_min, off_max, sum_min)
}

/// Resolvent test for one λ: nonnegative entries, `0 < (R_λ)_0^n < 1` and
/// row sums at most one.
pub fn resolvent_test(a: &TriKernel, lambda: f64) -> Result<bool> {
    let r = resolvent(a, lambda)?;
    for n in 1..=r.n_rows() {
        let row = r.row(n);
        let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if row.iter().any(|&v| v < -SIGN_TOL * scale) {
            return Ok(false);
        }
        let d = row[n - 1];
        if !(d > 0.0 && d < 1.0) {
            return Ok(false);
        }
        if row.iter().sum::<f64>() > 1.0 + SIGN_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

fn certify_b(b: &TriKernel, a: &TriKernel, lambdas: &[f64]) -> Result<CertificationReport> {
    let (pass, b_diagonal_min, b_offdiag_max, row_sum_min) = sign_test(b);
    if !(a.n_rows() == 0 || (1..=a.n_rows()).all(|n| a.diag(n) > 0.0)) {
        return Err(invalid("kernel", "needs a positive diagonal"));
    }
    let resolvent_checks = lambdas
        .iter()
        .map(|&l| resolvent_test(a, l).map(|ok| (l, ok)))
        .collect::<Result<Vec<_>>>()?;
    let tests_agree = resolvent_checks.iter().all(|&(_, ok)| ok == pass);
    Ok(CertificationReport {
        is_completely_positive: pass,
        b_diagonal_min,
        b_offdiag_max,
        row_sum_min,
        resolvent_checks,
        tests_agree,
        nu: None,
        rho1: None,
        chi_monotone: None,
    })
}

/// Certifies a bare integral-form kernel `A` (sign test on `B = A⁻¹`).
pub fn certify_kernel(a: &TriKernel, lambdas: &[f64]) -> Result<CertificationReport> {
    let b = invert(a)?;
    certify_b(&b, a, lambdas)
}

/// Certifies a scheme: sign test on `B = C ⋆ L⁻¹`, resolvent test on `A = B⁻¹`.
pub fn certify(kernel: &SchemeKernel, lambdas: &[f64]) -> Result<CertificationReport> {
    let b = kernel.b_kernel();
    let a = kernel.integral_kernel()?;
    let mut report = certify_b(&b, &a, lambdas)?;
    let (nu, rho1) = estimate_nu_rho1(kernel)?;
    report.nu = Some(nu);
    report.rho1 = Some(rho1);
    report.chi_monotone = kernel.chi_monotone();
    Ok(report)
}

/// `ν = min` and `ρ₁ = max` over all `(n, j)` of `c_{n-j}^n` divided by the
/// cell average of `g_{1-α}(t_n - ·)`.
pub fn estimate_nu_rho1(kernel: &SchemeKernel) -> Result<(f64, f64)> {
    check_alpha(kernel.alpha)?;
    let avg = average_kernel(kernel.alpha, &kernel.mesh);
    let mut nu = f64::INFINITY;
    let mut rho1 = f64::NEG_INFINITY;
    for n in 1..=avg.n_rows() {
        for (c, g) in kernel.c.row(n).iter().zip(avg.row(n)) {
            let r = c / g;
            nu = nu.min(r);
            rho1 = rho1.max(r);
        }
    }
    Ok((nu, rho1))
}
