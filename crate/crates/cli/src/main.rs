mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Time stepping, certification and Grönwall checks for Caputo fractional
/// ODEs and PDEs on nonuniform meshes.
#[derive(Debug, Parser)]
#[command(name = "fracgrid", version)]
pub struct Cli {
    /// Print timings and extra diagnostics.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Complete-positivity certification of a scheme or kernel file.
    Certify(CertifyArgs),
    /// Solve a scalar fractional ODE and write the trajectory CSV.
    Solve(SolveArgs),
    /// Check a trajectory CSV against Grönwall envelopes.
    GronwallCheck(GronwallArgs),
    /// Evaluate the Mittag-Leffler function.
    MlEval(MlArgs),
    /// Subdiffusion run from a key=value config file.
    Subdiffusion(PdeArgs),
    /// Allen-Cahn run from a key=value config file.
    AllenCahn(PdeArgs),
    /// Temporal and spatial refinement tables for subdiffusion.
    Convergence(PdeArgs),
}

/// Mesh source; at most one may be given.
#[derive(Debug, Args)]
#[group(multiple = false)]
pub struct MeshSource {
    /// Mesh file, one time per line.
    #[arg(long, visible_alias = "mesh", value_name = "FILE")]
    pub mesh_file: Option<PathBuf>,
    /// Graded mesh `t_n = T (n/N)^r`.
    #[arg(long, num_args = 3, value_names = ["T", "N", "R"])]
    pub graded: Option<Vec<f64>>,
    /// Random mesh with consecutive step ratios bounded by RATIO.
    #[arg(long, num_args = 4, value_names = ["T", "N", "RATIO", "SEED"])]
    pub random: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeName {
    L1,
    Integral,
    Cn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelForm {
    /// Weights `c_{n-j}^n` of the discrete derivative.
    Differential,
    /// Weights `a_{n-j}^n` of the integral form.
    Integral,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub mesh: Option<MeshSource>,
    #[arg(long, value_enum, default_value = "l1")]
    pub scheme: SchemeName,
    /// Kernel CSV (one row per n, columns `k_{n-1}^n ... k_0^n`) instead of a built-in scheme.
    /// With `--alpha` and a mesh the report also carries `ν` and `ρ₁`.
    #[arg(long, value_name = "FILE")]
    pub kernel: Option<PathBuf>,
    /// Weights held in `--kernel` and written by `--dump-kernel`.
    #[arg(long, value_enum, default_value = "integral")]
    pub kernel_form: KernelForm,
    /// Resolvent probes.
    #[arg(long, value_delimiter = ',', default_values_t = fracgrid_core::schemes::DEFAULT_LAMBDAS)]
    pub lambdas: Vec<f64>,
    /// Also write the scheme weights as kernel CSV.
    #[arg(long, value_name = "FILE")]
    pub dump_kernel: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleName {
    /// `θ f(t_n, u_n) + (1-θ) f(t_{n-1}, u_{n-1})`.
    Convex,
    /// `f` at the θ-combination of the two levels.
    Point,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub alpha: f64,
    #[command(flatten)]
    pub mesh: MeshSource,
    #[arg(long, value_enum, default_value = "l1")]
    pub scheme: SchemeName,
    /// Weight of the new level (defaults to the scheme's own).
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_enum, default_value = "convex")]
    pub theta_rule: RuleName,
    /// `affine:BETA,C`, `logistic:R` or `sine:K`.
    #[arg(long, allow_hyphen_values = true)]
    pub rhs: String,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub u0: f64,
    /// Trajectory CSV with columns `n,t,u,exact,lower,upper`.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Also write the mesh in the one-time-per-line format.
    #[arg(long, value_name = "FILE")]
    pub mesh_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantName {
    Uniform,
    DecayLower,
    DecayUpper,
    DecayUpperStep,
    Growing,
    LambdaZero,
}

#[derive(Debug, Args)]
pub struct GronwallArgs {
    /// Trajectory CSV written by `solve`.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Envelope variant; without it the CSV's own lower/upper columns are checked.
    #[arg(long, value_enum, requires_all = ["alpha", "lambda"])]
    pub variant: Option<VariantName>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// `λ ≥ 0` of the inequality `𝒟v ≤ ∓λ v + c`.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub nu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho1: f64,
    /// Defaults to the numerical estimate.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Defaults to `ν μ₁` with the numerical `μ₁`.
    #[arg(long)]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Branch {
    Auto,
    Series,
    Asymptotic,
    Integral,
}

#[derive(Debug, Args)]
pub struct MlArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Arguments, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub z: Vec<f64>,
    #[arg(long, value_enum, default_value = "auto")]
    pub branch: Branch,
}

#[derive(Debug, Args)]
pub struct PdeArgs {
    /// key=value configuration file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Extra `key=value` settings overriding the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output CSV (trajectory) or directory (convergence tables).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("FRACGRID_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("FRACGRID_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            anyhow::bail!("FRACGRID_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = init_threads().and_then(|_| commands::run(&cli));
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
