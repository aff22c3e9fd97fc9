//! `D^α u = u_xx + f(x)` on `(0, X)` with homogeneous Dirichlet data,
//! centered differences in space and the L1 scheme in time:
//!
//! `(c_0^n I - Δ_h) u_n = c_0^n u_{n-1} - Σ_{j<n} c_{n-j}^n ∇u_j + f`.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::{l2_norm, ConvergenceTable, PdeTrajectory};
use crate::error::{invalid, Error, Result};
use crate::gronwall::{
    verify_trajectory, Direction, EnvelopeConstants, EnvelopeVariant, GronwallEnvelope,
    VerificationReport,
};
use crate::mesh::{graded_mesh, Mesh};
use crate::ml::{estimate_sigma_constants, MittagLeffler};
use crate::schemes::{estimate_nu_rho1, l1_kernel};
use crate::solver::{solve, FodeProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct SubdiffusionConfig {
    pub alpha: f64,
    pub x_len: f64,
    pub h: f64,
    /// Source `f` at the interior nodes `x_k = k h`, `k = 1..M-1`.
    pub source: Vec<f64>,
    /// Initial data at the interior nodes.
    pub u0: Vec<f64>,
    pub mesh: Mesh,
}

/// Initial-data presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubdiffusionU0 {
    Zero,
    /// `sin(π x / X)`, an eigenvector of `Δ_h`.
    SinMode,
    /// `x (X - x)`.
    Parabola,
}

/// Source presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubdiffusionRhs {
    Zero,
    One,
    SinMode,
}

impl SubdiffusionConfig {
    pub fn new(alpha: f64, x_len: f64, h: f64, source: Vec<f64>, u0: Vec<f64>, mesh: Mesh) -> Result<Self> {
        let cfg = Self {
            alpha,
            x_len,
            h,
            source,
            u0,
            mesh,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Configuration with preset data sampled on the interior nodes.
    pub fn from_presets(
        alpha: f64,
        x_len: f64,
        h: f64,
        mesh: Mesh,
        u0: SubdiffusionU0,
        rhs: SubdiffusionRhs,
    ) -> Result<Self> {
        let m = interior_count(x_len, h)?;
        let xs: Vec<f64> = (1..=m).map(|k| k as f64 * h).collect();
        let mode = |x: f64| (PI * x / x_len).sin();
        let u0 = xs
            .iter()
            .map(|&x| match u0 {
                SubdiffusionU0::Zero => 0.0,
                SubdiffusionU0::SinMode => mode(x),
                SubdiffusionU0::Parabola => x * (x_len - x),
            })
            .collect();
        let source = xs
            .iter()
            .map(|&x| match rhs {
                SubdiffusionRhs::Zero => 0.0,
                SubdiffusionRhs::One => 1.0,
                SubdiffusionRhs::SinMode => mode(x),
            })
            .collect();
        Self::new(alpha, x_len, h, source, u0, mesh)
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        let m = interior_count(self.x_len, self.h)?;
        if self.u0.len() != m || self.source.len() != m {
            return Err(invalid(
                "u0/source",
                format!("need {m} interior samples, got {} and {}", self.u0.len(), self.source.len()),
            ));
        }
        Ok(())
    }

    /// Number of interior nodes `M - 1`.
    pub fn interior(&self) -> usize {
        self.u0.len()
    }

    /// Interior node coordinates.
    pub fn nodes(&self) -> Vec<f64> {
        (1..=self.interior()).map(|k| k as f64 * self.h).collect()
    }

    /// Smallest eigenvalue of `-Δ_h`.
    pub fn kappa(&self) -> f64 {
        discrete_kappa(self.x_len, self.h)
    }

    /// Discrete steady state `u_∞^h = -Δ_h⁻¹ f`.
    pub fn steady_state(&self) -> Vec<f64> {
        let m = self.interior();
        let ih2 = 1.0 / (self.h * self.h);
        thomas(&vec![-ih2; m], &vec![2.0 * ih2; m], &self.source)
    }
}

fn interior_count(x_len: f64, h: f64) -> Result<usize> {
    if !(x_len > 0.0 && h > 0.0 && h < x_len) {
        return Err(invalid("h", format!("need 0 < h < X, got h={h}, X={x_len}")));
    }
    let cells = (x_len / h).round();
    if ((cells * h - x_len) / x_len).abs() > 1e-12 {
        return Err(invalid("h", format!("h = {h} does not divide X = {x_len}")));
    }
    Ok(cells as usize - 1)
}

/// `κ = 4/h² sin²(π h / (2X))`.
pub fn discrete_kappa(x_len: f64, h: f64) -> f64 {
    let s = (PI * h / (2.0 * x_len)).sin();
    4.0 / (h * h) * s * s
}

/// Solves the symmetric tridiagonal system with constant off-diagonal
/// `off[k]` (couples `k` and `k+1`) and diagonal `diag`.
fn thomas(off: &[f64], diag: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    let mut cp = vec![0.0; m];
    let mut dp = vec![0.0; m];
    let mut denom = diag[0];
    cp[0] = off[0] / denom;
    dp[0] = rhs[0] / denom;
    for k in 1..m {
        denom = diag[k] - off[k - 1] * cp[k - 1];
        cp[k] = off[k] / denom;
        dp[k] = (rhs[k] - off[k - 1] * dp[k - 1]) / denom;
    }
    let mut x = vec![0.0; m];
    x[m - 1] = dp[m - 1];
    for k in (0..m - 1).rev() {
        x[k] = dp[k] - cp[k] * x[k + 1];
    }
    x
}

/// Full L1 trajectory of the semi-discrete problem.
pub fn solve_subdiffusion(cfg: &SubdiffusionConfig) -> Result<PdeTrajectory> {
    cfg.validate()?;
    let kernel = l1_kernel(cfg.alpha, &cfg.mesh)?;
    let m = cfg.interior();
    let n_steps = cfg.mesh.len();
    let ih2 = 1.0 / (cfg.h * cfg.h);
    let off = vec![-ih2; m];
    let mut u = Vec::with_capacity(n_steps + 1);
    u.push(cfg.u0.clone());
    let mut grads: Vec<Vec<f64>> = Vec::with_capacity(n_steps);
    for n in 1..=n_steps {
        let row = kernel.c.row(n);
        let c0 = row[n - 1];
        let prev: &Vec<f64> = &u[n - 1];
        let mut rhs: Vec<f64> = prev
            .iter()
            .zip(&cfg.source)
            .map(|(p, f)| c0 * p + f)
            .collect();
        for (j, g) in grads.iter().enumerate() {
            let w = row[j];
            for (r, gk) in rhs.iter_mut().zip(g) {
                *r -= w * gk;
            }
        }
        let next = thomas(&off, &vec![c0 + 2.0 * ih2; m], &rhs);
        grads.push(next.iter().zip(prev).map(|(a, b)| a - b).collect());
        u.push(next);
    }
    Ok(PdeTrajectory {
        t: cfg.mesh.points().to_vec(),
        u,
        h: cfg.h,
    })
}

fn sin_mode(x_len: f64, h: f64) -> Result<Vec<f64>> {
    let m = interior_count(x_len, h)?;
    Ok((1..=m).map(|k| (PI * k as f64 * h / x_len).sin()).collect())
}

fn sup_error(traj: &PdeTrajectory, mode: &[f64], amplitude: &[f64]) -> f64 {
    traj.u
        .iter()
        .zip(amplitude)
        .map(|(un, a)| {
            let diff: Vec<f64> = un.iter().zip(mode).map(|(u, s)| u - a * s).collect();
            l2_norm(&diff, traj.h)
        })
        .fold(0.0, f64::max)
}

fn time_mesh(t_final: f64, n: usize, grading_r: f64) -> Result<Mesh> {
    graded_mesh(t_final, n, grading_r)
}

/// Temporal refinement with the eigenmode initial datum: the semi-discrete
/// solution is `E_α(-κ t^α) sin(πx/X)` exactly, so the error is purely
/// temporal. `grading_r = 1` gives uniform meshes.
pub fn temporal_convergence(
    alpha: f64,
    x_len: f64,
    h: f64,
    t_final: f64,
    ns: &[usize],
    grading_r: f64,
) -> Result<ConvergenceTable> {
    let data = ns
        .par_iter()
        .map(|&n| {
            let mesh = time_mesh(t_final, n, grading_r)?;
            let cfg = SubdiffusionConfig::from_presets(
                alpha,
                x_len,
                h,
                mesh.clone(),
                SubdiffusionU0::SinMode,
                SubdiffusionRhs::Zero,
            )?;
            let kappa = cfg.kappa();
            let traj = solve_subdiffusion(&cfg)?;
            let e = MittagLeffler::classical(alpha)?;
            let amp: Vec<f64> = mesh
                .points()
                .iter()
                .map(|&t| e.eval(-kappa * t.powf(alpha)))
                .collect();
            let err = sup_error(&traj, &sin_mode(x_len, h)?, &amp);
            Ok((n, t_final / n as f64, err))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTable::from_errors(
        format!("temporal alpha={alpha} r={grading_r}"),
        &data,
    ))
}

/// Spatial refinement: compares the fully discrete eigenmode solution with
/// the time-discrete solution of the continuous mode (`λ = π²/X²`) on the
/// same time mesh, isolating the `h²` error.
pub fn spatial_convergence(
    alpha: f64,
    x_len: f64,
    hs: &[f64],
    t_final: f64,
    n_time: usize,
    grading_r: f64,
) -> Result<ConvergenceTable> {
    let mesh = time_mesh(t_final, n_time, grading_r)?;
    let kernel = l1_kernel(alpha, &mesh)?;
    let lambda = PI * PI / (x_len * x_len);
    let scalar = solve(&kernel, &FodeProblem::affine(-lambda, 0.0, 1.0))?;
    let data = hs
        .par_iter()
        .map(|&h| {
            let cfg = SubdiffusionConfig::from_presets(
                alpha,
                x_len,
                h,
                mesh.clone(),
                SubdiffusionU0::SinMode,
                SubdiffusionRhs::Zero,
            )?;
            let traj = solve_subdiffusion(&cfg)?;
            let err = sup_error(&traj, &sin_mode(x_len, h)?, &scalar.u);
            Ok(((x_len / h).round() as usize, h, err))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTable::from_errors(format!("spatial alpha={alpha}"), &data))
}

/// Temporal table on uniform meshes, temporal table on the graded mesh
/// `r = (2-α)/α`, and the spatial table.
pub fn truncation_and_error_study(
    alpha: f64,
    x_len: f64,
    t_final: f64,
    ns: &[usize],
    hs: &[f64],
) -> Result<[ConvergenceTable; 3]> {
    let h_fine = x_len / 16.0;
    let uniform = temporal_convergence(alpha, x_len, h_fine, t_final, ns, 1.0)?;
    let graded = temporal_convergence(alpha, x_len, h_fine, t_final, ns, (2.0 - alpha) / alpha)?;
    let n_time = *ns.last().ok_or_else(|| invalid("ns", "need at least one size"))?;
    let spatial = spatial_convergence(alpha, x_len, hs, t_final, n_time, 1.0)?;
    Ok([uniform, graded, spatial])
}

/// Outcome of [`decay_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    /// Fitted tail exponent of `‖u_n - u_∞^h‖`.
    pub rate: f64,
    /// Whether `κ τ_n^α ≤ 1` held on every step.
    pub step_condition: bool,
    /// Envelope variant used for the check.
    pub variant: EnvelopeVariant,
    pub envelope: VerificationReport,
    /// `‖u_n - u_∞^h‖`.
    pub distances: Vec<f64>,
    /// Envelope values at every `t_n`.
    pub envelope_values: Vec<f64>,
}

/// Tail slope of `‖u_n - u_∞^h‖` and its check against the Mittag-Leffler
/// decay envelope with `λ = κ`. The `σ` branch is used only when
/// `κ τ_n^α ≤ 1` holds on every step.
pub fn decay_report(traj: &PdeTrajectory, cfg: &SubdiffusionConfig) -> Result<DecayReport> {
    let steady = cfg.steady_state();
    let distances = traj.distances_to(&steady);
    let v0 = distances[0];
    if !(v0 > 0.0) {
        return Err(Error::InsufficientData("initial data equals the steady state".into()));
    }
    let kappa = cfg.kappa();
    let step_condition = kappa * cfg.mesh.max_step().powf(cfg.alpha) <= 1.0;
    let variant = if step_condition {
        EnvelopeVariant::DecayUpperStepRestricted
    } else {
        EnvelopeVariant::DecayUpperBasic
    };
    let kernel = l1_kernel(cfg.alpha, &cfg.mesh)?;
    let (nu, rho1) = estimate_nu_rho1(&kernel)?;
    let sigma = if step_condition {
        estimate_sigma_constants().sigma
    } else {
        1.0
    };
    let constants = EnvelopeConstants {
        nu,
        rho1,
        sigma,
        mu: nu,
    };
    let env = GronwallEnvelope::new(variant, cfg.alpha, kappa, 0.0, v0, constants, cfg.mesh.clone())?;
    let envelope = verify_trajectory(&env, &distances, Direction::Upper)?;
    let rate = crate::gronwall::decay_rate_fit(&traj.t, &distances)?;
    Ok(DecayReport {
        rate,
        step_condition,
        variant,
        envelope,
        envelope_values: env.values(),
        distances,
    })
}
