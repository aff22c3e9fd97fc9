//! Nonuniform time meshes `0 = t_0 < t_1 < ... < t_N = T`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

/// An immutable time grid together with its step sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    points: Vec<f64>,
    // steps[n - 1] = t_n - t_{n-1}
    steps: Vec<f64>,
}

impl Mesh {
    /// Builds a mesh from explicit grid points. The first point must be exactly zero.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidMesh("need at least two points".into()));
        }
        if points[0] != 0.0 {
            return Err(Error::InvalidMesh(format!(
                "first point must be 0, got {}",
                points[0]
            )));
        }
        if let Some(bad) = points.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidMesh(format!("point {bad} is not finite")));
        }
        let steps: Vec<f64> = points.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(n) = steps.iter().position(|&tau| tau <= 0.0) {
            return Err(Error::InvalidMesh(format!(
                "points not strictly increasing at index {}",
                n + 1
            )));
        }
        Ok(Self { points, steps })
    }

    /// Number of steps `N`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// All grid points `t_0..=t_N`.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Step sizes `tau_1..=tau_N` (index 0 holds `tau_1`).
    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// Grid point `t_n`.
    #[inline]
    pub fn t(&self, n: usize) -> f64 {
        self.points[n]
    }

    /// Step `tau_n = t_n - t_{n-1}` for `n >= 1`.
    #[inline]
    pub fn tau(&self, n: usize) -> f64 {
        assert!(n >= 1, "tau is defined for n >= 1");
        self.steps[n - 1]
    }

    /// Final time `T = t_N`.
    pub fn final_time(&self) -> f64 {
        *self.points.last().expect("mesh is never empty")
    }

    pub fn max_step(&self) -> f64 {
        self.steps.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_step(&self) -> f64 {
        self.steps.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest ratio `max(tau_{n+1}/tau_n, tau_n/tau_{n+1})` over consecutive steps.
    pub fn max_step_ratio(&self) -> f64 {
        self.steps
            .windows(2)
            .map(|w| (w[1] / w[0]).max(w[0] / w[1]))
            .fold(1.0, f64::max)
    }

    /// One time per line, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 25);
        for t in &self.points {
            let _ = writeln!(out, "{t:.16e}");
        }
        out
    }

    /// Parses the line-per-time format. Blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let t: f64 = line
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            points.push(t);
        }
        Self::from_points(points)
    }
}

fn check_horizon(t_final: f64, n: usize) -> Result<()> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(invalid("T", format!("must be positive and finite, got {t_final}")));
    }
    if n == 0 {
        return Err(invalid("N", "must be at least 1"));
    }
    Ok(())
}

/// `t_n = T n / N`.
pub fn uniform_mesh(t_final: f64, n: usize) -> Result<Mesh> {
    check_horizon(t_final, n)?;
    let nf = n as f64;
    let points = (0..=n).map(|k| t_final * (k as f64 / nf)).collect();
    Mesh::from_points(points)
}

/// Graded mesh `t_n = T (n/N)^r`, clustering points near `t = 0` for `r > 1`.
///
/// Points are evaluated from the closed form so that `r = 1` reproduces
/// [`uniform_mesh`] bit for bit.
pub fn graded_mesh(t_final: f64, n: usize, r: f64) -> Result<Mesh> {
    check_horizon(t_final, n)?;
    if !(r >= 1.0 && r.is_finite()) {
        return Err(invalid("r", format!("grading exponent must be >= 1, got {r}")));
    }
    let nf = n as f64;
    let points = (0..=n)
        .map(|k| t_final * (k as f64 / nf).powf(r))
        .collect();
    Mesh::from_points(points)
}

/// Random mesh whose consecutive step ratios lie in `[1/ratio_bound, ratio_bound]`.
///
/// Deterministic for a fixed seed. Log step ratios are drawn uniformly and
/// reflected so that every step stays within a factor `ratio_bound` of the
/// first one (otherwise the walk reaches steps below rounding level). The
/// steps are rescaled to end exactly at `T`, and the ratios are re-validated
/// after the points have been rounded.
pub fn random_mesh(t_final: f64, n: usize, ratio_bound: f64, seed: u64) -> Result<Mesh> {
    check_horizon(t_final, n)?;
    if !(ratio_bound >= 1.0 && ratio_bound.is_finite()) {
        return Err(invalid(
            "ratio_bound",
            format!("must be >= 1, got {ratio_bound}"),
        ));
    }
    if ratio_bound == 1.0 || n == 1 {
        return uniform_mesh(t_final, n);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Shrink slightly so rounding of the cumulative sum cannot push a ratio past the bound.
    let log_bound = ratio_bound.ln() * (1.0 - 1e-9);
    let mut steps = Vec::with_capacity(n);
    let window = ratio_bound.ln();
    let mut log_tau = 0.0_f64;
    steps.push(1.0);
    for _ in 1..n {
        let d = rng.random_range(-log_bound..=log_bound);
        log_tau = if (log_tau + d).abs() > window { log_tau - d } else { log_tau + d };
        steps.push(log_tau.exp());
    }
    let total: f64 = steps.iter().sum();
    let mut points = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    points.push(0.0);
    for s in &steps[..n - 1] {
        acc += s / total * t_final;
        points.push(acc);
    }
    points.push(t_final);
    let mesh = Mesh::from_points(points)?;
    let slack = 1.0 + 1e-6;
    if mesh.max_step_ratio() > ratio_bound * slack {
        return Err(Error::InvalidMesh(format!(
            "step ratio {} exceeds bound {ratio_bound} after normalization",
            mesh.max_step_ratio()
        )));
    }
    Ok(mesh)
}
