//! P1 finite elements: assembly, boundary and periodic constraints, fields,
//! norms, and the Poincaré constant estimator.

mod assembly;
mod constraints;
mod field;
mod poincare;

pub use assembly::{
    assemble_flux_load, assemble_load, assemble_mass, assemble_stiffness, assemble_stiffness_tensor,
    coefficient_minimum, lumped_mass, INTERIOR_RULE, MIDPOINT_RULE,
};
pub use constraints::{apply_dirichlet, apply_periodic_and_mean, DirichletConstraint, PeriodicMeanSystem};
pub use field::{h1_seminorm, l2_norm, FeField, ScalarFn};
pub use poincare::{estimate_poincare, PoincareEstimate};

use crate::mesh::Point;

/// Physical point from barycentric coordinates on a triangle.
pub(crate) fn map_point(v: &[Point; 3], lam: &[f64; 3]) -> Point {
    [
        lam[0] * v[0][0] + lam[1] * v[1][0] + lam[2] * v[2][0],
        lam[0] * v[0][1] + lam[1] * v[1][1] + lam[2] * v[2][1],
    ]
}
