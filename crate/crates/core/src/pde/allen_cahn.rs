//! Time-fractional Allen-Cahn `D^α u = κ² u_xx + u - u³` on the torus
//! `[-π, π)` with Fourier spectral differentiation and the L1 scheme.
//!
//! Each step solves `(c_0 - 1) u + u³ - κ² D² u = c_0 u_{n-1} - H_n` by
//! Newton's method; the Newton systems are solved by conjugate gradients
//! preconditioned with the Fourier-diagonal operator
//! `c_0 - 1 + 3 mean(u²) + κ² k²`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{l2_norm, PdeTrajectory};
use crate::error::{invalid, Error, Result};
use crate::mesh::Mesh;
use crate::schemes::l1_kernel;

const NEWTON_TOL: f64 = 1e-13;
const NEWTON_MAX: usize = 50;
const CG_TOL: f64 = 1e-14;
const CG_MAX: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct AllenCahnConfig {
    pub alpha: f64,
    pub kappa2: f64,
    /// Number of grid points `M` (even); `x_k = -π + 2πk/M`.
    pub modes: usize,
    pub u0: Vec<f64>,
    pub mesh: Mesh,
    /// Keep every Newton iterate exactly antisymmetric about `x = 0`.
    /// The zero mode is linearly unstable, so without this the roundoff in
    /// `Σ u` of odd data grows like the unstable mode over long horizons.
    pub odd_symmetry: bool,
}

/// Initial-data presets (all odd).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AllenCahnU0 {
    Zero,
    /// `a sin x`.
    Sine(f64),
    /// `a (sin x + sin 2x / 2)`.
    TwoModes(f64),
}

impl AllenCahnConfig {
    pub fn new(alpha: f64, kappa2: f64, modes: usize, u0: Vec<f64>, mesh: Mesh) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
        }
        if !(kappa2 > 1.0) {
            return Err(invalid("kappa2", format!("must exceed 1, got {kappa2}")));
        }
        if modes < 4 || !modes.is_multiple_of(2) {
            return Err(invalid("modes", format!("must be even and >= 4, got {modes}")));
        }
        if u0.len() != modes {
            return Err(invalid("u0", format!("need {modes} samples, got {}", u0.len())));
        }
        Ok(Self {
            alpha,
            kappa2,
            modes,
            u0,
            mesh,
            odd_symmetry: false,
        })
    }

    /// Enables [`AllenCahnConfig::odd_symmetry`]; fails unless `u0` is odd
    /// on the grid to `1e-14` relative.
    pub fn with_odd_symmetry(mut self, on: bool) -> Result<Self> {
        if on {
            let scale = self.u0.iter().fold(1.0f64, |a, x| a.max(x.abs()));
            let mut odd = self.u0.clone();
            make_odd(&mut odd);
            let dev = odd.iter().zip(&self.u0).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            if dev > 1e-14 * scale {
                return Err(invalid("u0", format!("not odd on the grid (deviation {dev:e})")));
            }
            self.u0 = odd;
        }
        self.odd_symmetry = on;
        Ok(self)
    }

    pub fn from_preset(alpha: f64, kappa2: f64, modes: usize, u0: AllenCahnU0, mesh: Mesh) -> Result<Self> {
        let xs = grid(modes);
        let mut u0: Vec<f64> = xs
            .iter()
            .map(|&x| match u0 {
                AllenCahnU0::Zero => 0.0,
                AllenCahnU0::Sine(a) => a * x.sin(),
                AllenCahnU0::TwoModes(a) => a * (x.sin() + 0.5 * (2.0 * x).sin()),
            })
            .collect();
        if modes >= 4 && modes.is_multiple_of(2) {
            make_odd(&mut u0);
        }
        Self::new(alpha, kappa2, modes, u0, mesh)
    }

    pub fn h(&self) -> f64 {
        2.0 * PI / self.modes as f64
    }
}

/// Torus grid `x_k = -π + 2πk/M`.
pub fn grid(modes: usize) -> Vec<f64> {
    (0..modes)
        .map(|k| -PI + 2.0 * PI * k as f64 / modes as f64)
        .collect()
}

/// Projects grid values onto odd functions: `u(-x) = -u(x)` with
/// `x_{M-k} = -x_k`, so `u_0 = u_{M/2} = 0`.
fn make_odd(u: &mut [f64]) {
    let m = u.len();
    u[0] = 0.0;
    u[m / 2] = 0.0;
    for k in 1..m / 2 {
        let v = 0.5 * (u[k] - u[m - k]);
        u[k] = v;
        u[m - k] = -v;
    }
}

/// Magnitude of the normalized zero Fourier coefficient `|Σ u_k| / M`.
pub fn zero_mode(u: &[f64]) -> f64 {
    u.iter().sum::<f64>().abs() / u.len() as f64
}

struct Spectral {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Integer wavenumbers in FFT order.
    k2: Vec<f64>,
    buf: Vec<Complex64>,
}

impl Spectral {
    fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        let k2 = (0..m)
            .map(|i| {
                let k = if i <= m / 2 { i as f64 } else { i as f64 - m as f64 };
                k * k
            })
            .collect();
        Self {
            fwd: planner.plan_fft_forward(m),
            inv: planner.plan_fft_inverse(m),
            k2,
            buf: vec![Complex64::new(0.0, 0.0); m],
        }
    }

    /// `out = Σ_k mult(k²) û_k e^{ikx}`.
    fn apply(&mut self, u: &[f64], mult: impl Fn(f64) -> f64, out: &mut [f64]) {
        let m = u.len();
        for (b, &v) in self.buf.iter_mut().zip(u) {
            *b = Complex64::new(v, 0.0);
        }
        self.fwd.process(&mut self.buf);
        let scale = 1.0 / m as f64;
        for (b, &k2) in self.buf.iter_mut().zip(&self.k2) {
            *b *= mult(k2) * scale;
        }
        self.inv.process(&mut self.buf);
        for (o, b) in out.iter_mut().zip(&self.buf) {
            *o = b.re;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned CG for `(diag(d) + κ²(-D²)) x = b`.
fn pcg(sp: &mut Spectral, d: &[f64], kappa2: f64, shift: f64, b: &[f64]) -> Vec<f64> {
    let m = b.len();
    let mut lap = vec![0.0; m];
    let mut apply_a = |sp: &mut Spectral, v: &[f64], out: &mut [f64]| {
        sp.apply(v, |k2| kappa2 * k2, &mut lap);
        for i in 0..m {
            out[i] = d[i] * v[i] + lap[i];
        }
    };
    let precond = |sp: &mut Spectral, r: &[f64], out: &mut [f64]| {
        sp.apply(r, |k2| 1.0 / (shift + kappa2 * k2), out);
    };
    let mut x = vec![0.0; m];
    let mut r = b.to_vec();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return x;
    }
    let mut z = vec![0.0; m];
    precond(sp, &r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; m];
    for _ in 0..CG_MAX {
        apply_a(sp, &p, &mut ap);
        let step = rz / dot(&p, &ap);
        for i in 0..m {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        if dot(&r, &r).sqrt() <= CG_TOL * bnorm {
            break;
        }
        precond(sp, &r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..m {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// Full L1 trajectory. Requires `c_0^n > 1` on every step so that each
/// Newton system is positive definite.
pub fn solve_allen_cahn(cfg: &AllenCahnConfig) -> Result<PdeTrajectory> {
    let kernel = l1_kernel(cfg.alpha, &cfg.mesh)?;
    let m = cfg.modes;
    let n_steps = cfg.mesh.len();
    let mut sp = Spectral::new(m);
    let mut u: Vec<Vec<f64>> = Vec::with_capacity(n_steps + 1);
    u.push(cfg.u0.clone());
    let mut grads: Vec<Vec<f64>> = Vec::with_capacity(n_steps);
    let mut lap = vec![0.0; m];
    for n in 1..=n_steps {
        let row = kernel.c.row(n);
        let c0 = row[n - 1];
        if !(c0 > 1.0) {
            return Err(Error::Solvability {
                step: n,
                detail: format!("c_0 = {c0} must exceed 1; refine the time mesh"),
            });
        }
        let prev = &u[n - 1];
        let mut q: Vec<f64> = prev.iter().map(|p| c0 * p).collect();
        for (j, g) in grads.iter().enumerate() {
            let w = row[j];
            for (qi, gi) in q.iter_mut().zip(g) {
                *qi -= w * gi;
            }
        }
        let mut v = prev.clone();
        let mut converged = false;
        let mut res_norm = f64::INFINITY;
        for _ in 0..NEWTON_MAX {
            sp.apply(&v, |k2| cfg.kappa2 * k2, &mut lap);
            let g: Vec<f64> = (0..m)
                .map(|i| (c0 - 1.0) * v[i] + v[i] * v[i] * v[i] + lap[i] - q[i])
                .collect();
            let vmax = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            res_norm = g.iter().fold(0.0f64, |a, x| a.max(x.abs())) / c0;
            if res_norm <= NEWTON_TOL * (1.0 + vmax) {
                converged = true;
                break;
            }
            let d: Vec<f64> = v.iter().map(|x| c0 - 1.0 + 3.0 * x * x).collect();
            let shift = c0 - 1.0 + 3.0 * dot(&v, &v) / m as f64;
            let delta = pcg(&mut sp, &d, cfg.kappa2, shift, &g);
            for (vi, di) in v.iter_mut().zip(&delta) {
                *vi -= di;
            }
            if cfg.odd_symmetry {
                make_odd(&mut v);
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                step: n,
                iterations: NEWTON_MAX,
                residual: res_norm,
            });
        }
        grads.push(v.iter().zip(prev).map(|(a, b)| a - b).collect());
        u.push(v);
    }
    Ok(PdeTrajectory {
        t: cfg.mesh.points().to_vec(),
        u,
        h: cfg.h(),
    })
}

/// `‖u‖` for each snapshot, with the torus quadrature weight `2π/M`.
pub fn norms(traj: &PdeTrajectory) -> Vec<f64> {
    traj.u.iter().map(|v| l2_norm(v, traj.h)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::uniform_mesh;

    #[test]
    fn spectral_second_derivative_is_exact_for_trig() {
        let m = 16;
        let xs = grid(m);
        let u: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin() + (2.0 * x).cos()).collect();
        let mut sp = Spectral::new(m);
        let mut out = vec![0.0; m];
        sp.apply(&u, |k2| -k2, &mut out);
        for (o, x) in out.iter().zip(&xs) {
            let exact = -9.0 * (3.0 * x).sin() - 4.0 * (2.0 * x).cos();
            assert!((o - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_initial_data_stays_zero() {
        let cfg = AllenCahnConfig::from_preset(0.5, 2.0, 16, AllenCahnU0::Zero, uniform_mesh(1.0, 8).unwrap())
            .unwrap();
        let tr = solve_allen_cahn(&cfg).unwrap();
        assert!(tr.u.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_of_step_equation() {
        let mesh = uniform_mesh(1.0, 6).unwrap();
        let cfg = AllenCahnConfig::from_preset(0.6, 2.0, 32, AllenCahnU0::TwoModes(0.8), mesh.clone()).unwrap();
        let tr = solve_allen_cahn(&cfg).unwrap();
        let k = l1_kernel(0.6, &mesh).unwrap();
        let mut sp = Spectral::new(32);
        let mut lap = vec![0.0; 32];
        for n in 1..=6 {
            sp.apply(&tr.u[n], |k2| -k2, &mut lap);
            for i in 0..32 {
                let seq: Vec<f64> = tr.u.iter().map(|v| v[i]).collect();
                let d = k.apply_derivative(&seq).unwrap()[n - 1];
                let x = tr.u[n][i];
                let r = d - (2.0 * lap[i] + x - x * x * x);
                assert!(r.abs() < 1e-11, "n={n} i={i} r={r}");
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mesh = uniform_mesh(1.0, 4).unwrap();
        assert!(AllenCahnConfig::from_preset(0.5, 1.0, 16, AllenCahnU0::Zero, mesh.clone()).is_err());
        assert!(AllenCahnConfig::from_preset(0.5, 2.0, 15, AllenCahnU0::Zero, mesh.clone()).is_err());
        let coarse = uniform_mesh(1000.0, 2).unwrap();
        let cfg = AllenCahnConfig::from_preset(0.5, 2.0, 16, AllenCahnU0::Sine(0.1), coarse).unwrap();
        assert!(matches!(solve_allen_cahn(&cfg), Err(Error::Solvability { .. })));
    }
}
