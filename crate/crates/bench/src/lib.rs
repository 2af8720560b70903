//! Fixtures shared by the benchmarks.

use capflow_core::index_lab::{build_index_problem, Flavor, IndexProblem};
use capflow_core::surface::builtin::half_clifford_torus;

/// Morse index problem on the half Clifford torus at mesh size `h`.
pub fn half_clifford_problem(h: f64) -> IndexProblem {
    build_index_problem(&half_clifford_torus(), Flavor::Morse, h).expect("builtin surface meshes")
}
