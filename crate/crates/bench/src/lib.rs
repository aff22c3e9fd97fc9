//! Shared fixtures for the criterion benchmarks.

use fracgrid_core::{graded_mesh, Mesh};

/// Graded mesh on `[0, 1]` with exponent 2, the default benchmark grid.
pub fn bench_mesh(n: usize) -> Mesh {
    graded_mesh(1.0, n, 2.0).expect("valid mesh parameters")
}
