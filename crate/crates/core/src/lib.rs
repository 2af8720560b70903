//! Conformal flows, capillary surfaces in spherical caps and their index forms.

// Negated comparisons reject NaN on purpose; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod conformal;
pub mod error;
pub mod format;
pub mod functionals;
pub mod index_lab;
pub mod jet;
pub mod linalg;
pub mod spectral;
pub mod surface;

pub use conformal::{Cap, FlowSpec, MoebiusMap, SpherePoint};
pub use error::{Error, Result};
pub use format::fmt17;
