//! Nonuniform-grid discretizations of Caputo fractional ODEs: discrete
//! convolution kernels, complete positivity checks, implicit solvers,
//! Grönwall envelopes and two model PDEs.

pub mod error;
pub mod gronwall;
pub mod kernel;
pub mod mesh;
pub mod ml;
pub mod pde;
mod quad;
pub mod schemes;
pub mod solver;

pub use error::{Error, Result};
pub use kernel::TriKernel;
pub use mesh::{graded_mesh, random_mesh, uniform_mesh, Mesh};
pub use ml::{linear_fode_exact, ml, MittagLeffler};
pub use schemes::{certify, cn_l1plus_kernel, integral_form_kernel, l1_kernel, CertificationReport, SchemeFamily, SchemeKernel};
pub use solver::{solve, FodeProblem, Rhs, ThetaRule, Trajectory};
