//! One-dimensional dissipative model problems driven by the L1 scheme.

pub mod allen_cahn;
pub mod subdiffusion;

pub use allen_cahn::{solve_allen_cahn, AllenCahnConfig, AllenCahnU0};
pub use subdiffusion::{
    decay_report, solve_subdiffusion, spatial_convergence, temporal_convergence,
    truncation_and_error_study, DecayReport, SubdiffusionConfig,
};

/// Spatial snapshots `u_0..=u_N` on a time mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeTrajectory {
    pub t: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    /// Quadrature weight of the discrete ℓ² norm.
    pub h: f64,
}

impl PdeTrajectory {
    /// `‖u_n‖ = (h Σ_k u_{n,k}²)^{1/2}`.
    pub fn norms(&self) -> Vec<f64> {
        self.u.iter().map(|v| l2_norm(v, self.h)).collect()
    }

    /// `‖u_n - w‖` for a fixed profile `w`.
    pub fn distances_to(&self, w: &[f64]) -> Vec<f64> {
        self.u
            .iter()
            .map(|v| {
                let s: f64 = v.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
                (self.h * s).sqrt()
            })
            .collect()
    }
}

pub fn l2_norm(v: &[f64], h: f64) -> f64 {
    (h * v.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

/// Row `(size, step, error, order)` of a refinement study; `order` compares
/// with the previous row.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub size: usize,
    pub step: f64,
    pub error: f64,
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub label: String,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Builds rows from `(size, step, error)` triples, with observed orders
    /// `log(e_{k-1}/e_k) / log(step_{k-1}/step_k)`.
    pub fn from_errors(label: impl Into<String>, data: &[(usize, f64, f64)]) -> Self {
        let rows = data
            .iter()
            .enumerate()
            .map(|(i, &(size, step, error))| ConvergenceRow {
                size,
                step,
                error,
                order: (i > 0).then(|| {
                    let (_, s0, e0) = data[i - 1];
                    (e0 / error).ln() / (s0 / step).ln()
                }),
            })
            .collect();
        Self {
            label: label.into(),
            rows,
        }
    }

    /// Order observed between the last two rows.
    pub fn final_order(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.order)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,step,error,order\n");
        for r in &self.rows {
            let order = r.order.map_or(String::new(), |o| format!("{o:.16e}"));
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{}\n",
                r.size, r.step, r.error, order
            ));
        }
        out
    }
}
