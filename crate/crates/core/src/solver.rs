//! Time stepping for scalar Caputo equations `D^α u = f(t, u)` under a
//! differential-form kernel:
//!
//! `Σ_{j=1}^n c_{n-j}^n ∇u_j = F_n + g_n`,
//!
//! where `F_n` is the θ-rule evaluation of `f` and `g_n` an optional
//! forcing sequence. `θ` weights the new time level.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::kernel::TriKernel;
use crate::mesh::Mesh;
use crate::schemes::{SchemeFamily, SchemeKernel};

/// Relative margin used when enforcing strict solvability inequalities.
pub const STRICT_MARGIN: f64 = 1e-12;
/// Newton iteration cap.
pub const MAX_ITERATIONS: usize = 100;
/// Residual tolerance, relative to `1 + |u_n|` after scaling by the diagonal.
pub const RESIDUAL_TOL: f64 = 1e-12;

type RhsFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Right-hand side `f(t, u)`.
#[derive(Clone)]
pub enum Rhs {
    /// `f(t, u) = β u + c`, solved by exact division.
    Affine { beta: f64, c: f64 },
    General(Arc<RhsFn>),
}

impl Rhs {
    pub fn general(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Rhs::General(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, t: f64, u: f64) -> f64 {
        match self {
            Rhs::Affine { beta, c } => beta * u + c,
            Rhs::General(f) => f(t, u),
        }
    }
}

impl fmt::Debug for Rhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rhs::Affine { beta, c } => write!(f, "Affine {{ beta: {beta}, c: {c} }}"),
            Rhs::General(_) => f.write_str("General(..)"),
        }
    }
}

/// How `f` enters step `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaRule {
    /// `θ f(t_n, u_n) + (1-θ) f(t_{n-1}, u_{n-1})`.
    ConvexComboOfF,
    /// `f(θ t_n + (1-θ) t_{n-1}, θ u_n + (1-θ) u_{n-1})`.
    FAtComboPoint,
}

#[derive(Debug, Clone)]
pub struct FodeProblem {
    pub rhs: Rhs,
    /// Lipschitz bound `M` of `f` in `u`, when known.
    pub lipschitz: Option<f64>,
    pub u0: f64,
    /// Overrides the kernel's own θ when set (ignored by Crank-Nicolson).
    pub theta: Option<f64>,
    pub rule: ThetaRule,
}

impl FodeProblem {
    pub fn new(rhs: Rhs, u0: f64) -> Self {
        Self {
            rhs,
            lipschitz: None,
            u0,
            theta: None,
            rule: ThetaRule::ConvexComboOfF,
        }
    }

    /// `f(t, u) = β u + c`.
    pub fn affine(beta: f64, c: f64, u0: f64) -> Self {
        let mut p = Self::new(Rhs::Affine { beta, c }, u0);
        p.lipschitz = Some(beta.abs());
        p
    }

    pub fn with_theta(mut self, theta: f64, rule: ThetaRule) -> Self {
        self.theta = Some(theta);
        self.rule = rule;
        self
    }

    pub fn with_lipschitz(mut self, m: f64) -> Self {
        self.lipschitz = Some(m);
        self
    }
}

/// Grid values `u_0..=u_N` with their times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// `φ(u) = f(t, scale·u + offset)`: the part of `F_n` that depends on `u_n`.
struct Phi<'a> {
    rhs: &'a Rhs,
    t: f64,
    scale: f64,
    offset: f64,
}

impl Phi<'_> {
    #[inline]
    fn eval(&self, u: f64) -> f64 {
        self.rhs.eval(self.t, self.scale * u + self.offset)
    }
}

/// Solves `d·u - w·φ(u) = q` for `u`, starting from `guess`.
fn solve_scalar(step: usize, d: f64, w: f64, phi: &Phi, q: f64, guess: f64) -> Result<f64> {
    if let Rhs::Affine { beta, c } = phi.rhs {
        let denom = d - w * beta * phi.scale;
        if !(denom > 0.0) {
            return Err(Error::Solvability {
                step,
                detail: format!("effective diagonal {denom:e} is not positive"),
            });
        }
        return Ok((q + w * (beta * phi.offset + c)) / denom);
    }
    let g = |u: f64| d * u - w * phi.eval(u) - q;
    let converged = |u: f64, r: f64| (r / d).abs() <= RESIDUAL_TOL * (1.0 + u.abs());
    let mut u = guess;
    let mut r = g(u);
    for _ in 0..MAX_ITERATIONS {
        if !r.is_finite() {
            break;
        }
        if converged(u, r) {
            return Ok(u);
        }
        let h = 1e-7 * (1.0 + u.abs());
        let jac = (g(u + h) - g(u - h)) / (2.0 * h);
        let mut accepted = false;
        if jac.is_finite() && jac != 0.0 {
            let delta = r / jac;
            let mut lambda = 1.0;
            for _ in 0..10 {
                let cand = u - lambda * delta;
                let rc = g(cand);
                if rc.abs() < r.abs() || converged(cand, rc) {
                    u = cand;
                    r = rc;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
        }
        if !accepted {
            // fixed-point map u ← (q + w φ(u)) / d, a contraction when w M < d
            u = (q + w * phi.eval(u)) / d;
            r = g(u);
        }
    }
    if r.is_finite() && converged(u, r) {
        return Ok(u);
    }
    Err(Error::NoConvergence {
        step,
        iterations: MAX_ITERATIONS,
        residual: (r / d).abs(),
    })
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(invalid("theta", format!("must lie in [0, 1], got {theta}")));
    }
    Ok(())
}

/// Checks `θ M < d` with the strict margin; returns `d - θ M`.
pub fn check_solvability(step: usize, d: f64, theta: f64, m: f64) -> Result<f64> {
    let slack = d - theta * m;
    if !(slack > STRICT_MARGIN * d) {
        return Err(Error::Solvability {
            step,
            detail: format!("theta*M = {:e} is not below c_0 = {d:e}", theta * m),
        });
    }
    Ok(slack)
}

/// One step of `Σ_j w_{n-j}^n ∇u_j = F_n + g` for an arbitrary kernel `w`.
///
/// `history` holds `u_0..=u_{n-1}`.
pub fn step_with_kernel(
    w: &TriKernel,
    mesh: &Mesh,
    theta: f64,
    problem: &FodeProblem,
    history: &[f64],
    forcing: f64,
) -> Result<f64> {
    check_theta(theta)?;
    let n = history.len();
    if n == 0 || n > w.n_rows() {
        return Err(invalid("history", format!("length {n} incompatible with kernel")));
    }
    let row = w.row(n);
    let d = row[n - 1];
    // Both θ rules put weight θ on the u_n-dependence of f. A nonincreasing
    // affine f never violates solvability.
    if let Some(m) = problem.lipschitz {
        if !matches!(problem.rhs, Rhs::Affine { beta, .. } if beta <= 0.0) {
            check_solvability(n, d, theta, m)?;
        }
    }
    let prev = history[n - 1];
    let hist: f64 = (1..n)
        .map(|j| row[j - 1] * (history[j] - history[j - 1]))
        .sum();
    let (t_new, t_old) = (mesh.t(n), mesh.t(n - 1));
    let base = d * prev - hist + forcing;
    match problem.rule {
        ThetaRule::ConvexComboOfF => {
            let known = if theta < 1.0 {
                (1.0 - theta) * problem.rhs.eval(t_old, prev)
            } else {
                0.0
            };
            let phi = Phi {
                rhs: &problem.rhs,
                t: t_new,
                scale: 1.0,
                offset: 0.0,
            };
            if theta == 0.0 {
                return Ok((base + known) / d);
            }
            solve_scalar(n, d, theta, &phi, base + known, prev)
        }
        ThetaRule::FAtComboPoint => {
            let phi = Phi {
                rhs: &problem.rhs,
                t: theta * t_new + (1.0 - theta) * t_old,
                scale: theta,
                offset: (1.0 - theta) * prev,
            };
            solve_scalar(n, d, 1.0, &phi, base, prev)
        }
    }
}

fn effective_theta(kernel: &SchemeKernel, problem: &FodeProblem) -> f64 {
    problem.theta.unwrap_or(kernel.theta)
}

/// One implicit or weighted-θ step of a non-Crank-Nicolson scheme.
pub fn step_implicit(kernel: &SchemeKernel, problem: &FodeProblem, history: &[f64]) -> Result<f64> {
    let theta = effective_theta(kernel, problem);
    step_with_kernel(&kernel.c, &kernel.mesh, theta, problem, history, 0.0)
}

/// One Crank-Nicolson L1⁺ step: `Σ_j χ_{n-j}^n ∇u_j = ½ (f(t_n,u_n) + f(t_{n-1},u_{n-1}))`.
///
/// Requires `χ_0^n > M/2`.
pub fn step_cn(kernel: &SchemeKernel, problem: &FodeProblem, history: &[f64]) -> Result<f64> {
    let chi = kernel
        .chi
        .as_ref()
        .ok_or_else(|| invalid("kernel", "step_cn needs a Crank-Nicolson kernel"))?;
    let mut p = problem.clone();
    p.rule = ThetaRule::ConvexComboOfF;
    step_with_kernel(chi, &kernel.mesh, 0.5, &p, history, 0.0)
}

/// Full trajectory `u_0..=u_N` on the kernel's mesh.
pub fn solve(kernel: &SchemeKernel, problem: &FodeProblem) -> Result<Trajectory> {
    solve_forced(kernel, problem, None)
}

/// Like [`solve`] with an additive forcing `g_n` (index 0 holds `g_1`).
pub fn solve_forced(
    kernel: &SchemeKernel,
    problem: &FodeProblem,
    forcing: Option<&[f64]>,
) -> Result<Trajectory> {
    let n_steps = kernel.n_steps();
    if let Some(g) = forcing {
        if g.len() != n_steps {
            return Err(Error::SizeMismatch {
                left: n_steps,
                right: g.len(),
            });
        }
    }
    let (w, theta, p) = match kernel.family {
        SchemeFamily::CrankNicolsonL1Plus => {
            let chi = kernel
                .chi
                .as_ref()
                .ok_or_else(|| invalid("kernel", "Crank-Nicolson kernel without chi"))?;
            let mut p = problem.clone();
            p.rule = ThetaRule::ConvexComboOfF;
            (chi, 0.5, p)
        }
        _ => (&kernel.c, effective_theta(kernel, problem), problem.clone()),
    };
    let mut u = Vec::with_capacity(n_steps + 1);
    u.push(problem.u0);
    for n in 1..=n_steps {
        let g = forcing.map_or(0.0, |g| g[n - 1]);
        let next = step_with_kernel(w, &kernel.mesh, theta, &p, &u, g)?;
        u.push(next);
    }
    Ok(Trajectory {
        t: kernel.mesh.points().to_vec(),
        u,
    })
}

/// Integral-form solver `u_n = u_0 + Σ_j a_{n-j}^n F_j`, with `F_j` the
/// θ-rule evaluation of `f`.
pub fn solve_integral_form(
    a: &TriKernel,
    mesh: &Mesh,
    problem: &FodeProblem,
    theta: f64,
) -> Result<Trajectory> {
    check_theta(theta)?;
    let n_steps = mesh.len();
    if a.n_rows() != n_steps {
        return Err(Error::SizeMismatch {
            left: a.n_rows(),
            right: n_steps,
        });
    }
    let mut u = Vec::with_capacity(n_steps + 1);
    u.push(problem.u0);
    // F_j for j < n
    let mut big_f: Vec<f64> = Vec::with_capacity(n_steps);
    for n in 1..=n_steps {
        let row = a.row(n);
        let ann = row[n - 1];
        if !(ann > 0.0) {
            return Err(Error::SingularKernel { row: n, value: ann });
        }
        let prev = u[n - 1];
        let (t_new, t_old) = (mesh.t(n), mesh.t(n - 1));
        let past: f64 = row[..n - 1].iter().zip(&big_f).map(|(x, y)| x * y).sum();
        let d = 1.0 / ann;
        let base = (problem.u0 + past) * d;
        let next = match problem.rule {
            ThetaRule::ConvexComboOfF => {
                let known = (1.0 - theta) * problem.rhs.eval(t_old, prev);
                let phi = Phi {
                    rhs: &problem.rhs,
                    t: t_new,
                    scale: 1.0,
                    offset: 0.0,
                };
                let un = if theta == 0.0 {
                    (base + known) / d
                } else {
                    solve_scalar(n, d, theta, &phi, base + known, prev)?
                };
                big_f.push(theta * problem.rhs.eval(t_new, un) + known);
                un
            }
            ThetaRule::FAtComboPoint => {
                let phi = Phi {
                    rhs: &problem.rhs,
                    t: theta * t_new + (1.0 - theta) * t_old,
                    scale: theta,
                    offset: (1.0 - theta) * prev,
                };
                let un = solve_scalar(n, d, 1.0, &phi, base, prev)?;
                big_f.push(phi.eval(un));
                un
            }
        };
        u.push(next);
    }
    Ok(Trajectory {
        t: mesh.points().to_vec(),
        u,
    })
}

/// Conditions of the weighted-θ comparison principle for every row:
/// `c_0^n > θ M` and `c_0^n - c_1^n ≥ (1-θ) M`, with `c_1^1 := 0`.
pub fn weighted_theta_conditions(c: &TriKernel, theta: f64, m: f64) -> bool {
    (1..=c.n_rows()).all(|n| {
        let c0 = c.entry(n, 0);
        let c1 = if n > 1 { c.entry(n, 1) } else { 0.0 };
        c0 - theta * m > STRICT_MARGIN * c0 && c0 - c1 >= (1.0 - theta) * m
    })
}
