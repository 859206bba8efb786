use crate::error::{Error, Result};
use crate::fem::{apply_dirichlet, assemble_mass, assemble_stiffness};
use crate::mesh::{BoundaryTag, Mesh};
use crate::sparse::{dot, solve_spd_from, SolverOptions};

const MAX_ITERATIONS: usize = 500;
const TOLERANCE: f64 = 1e-10;

/// Poincaré constant `c_p = 1/λ_min` of the Dirichlet Laplacian on a mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareEstimate {
    pub c_p: f64,
    pub lambda_min: f64,
    pub iterations: usize,
    pub tag: BoundaryTag,
}

/// Inverse power iteration on `K x = λ M x`, with the nodes on `tag` held at zero.
pub fn estimate_poincare(mesh: &Mesh, tag: BoundaryTag) -> Result<PoincareEstimate> {
    let n = mesh.node_count();
    let mut k = assemble_stiffness(mesh, &|_| 1.0)?;
    let mut scratch = vec![0.0; n];
    let constraint = apply_dirichlet(&mut k, &mut scratch, mesh, tag, 0.0)?;
    let mut m = assemble_mass(mesh);
    constraint.apply_matrix(&mut m);
    for &d in constraint.dofs() {
        // apply_matrix puts 1 on the diagonal; the mass must vanish there.
        let (s, e) = (m.row_offsets()[d], m.row_offsets()[d + 1]);
        m.values_mut()[s..e].iter_mut().for_each(|v| *v = 0.0);
    }
    if constraint.dofs().len() == n {
        return Err(crate::error::invalid(
            "every node is constrained; no free eigenfunction",
        ));
    }

    let opts = SolverOptions::with_tol(1e-12);
    let mut x: Vec<f64> = (0..n).map(|i| if constraint.is_fixed(i) { 0.0 } else { 1.0 }).collect();
    let mut lambda = f64::INFINITY;
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        let mx = m.mul_vec(&x);
        let y = solve_spd_from(&k, &mx, Some(&x), &opts)?.x;
        let my = m.mul_vec(&y);
        let norm = dot(&y, &my).sqrt();
        x = y.into_iter().map(|v| v / norm).collect();
        let next = k.quadratic_form(&x) / m.quadratic_form(&x);
        residual = ((next - lambda) / next).abs();
        lambda = next;
        if residual < TOLERANCE {
            return Ok(PoincareEstimate {
                c_p: 1.0 / lambda,
                lambda_min: lambda,
                iterations: it,
                tag,
            });
        }
    }
    Err(Error::NonConvergence {
        solver: "inverse power iteration",
        iterations: MAX_ITERATIONS,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_square;

    #[test]
    fn unit_square_first_eigenvalue() {
        let est = estimate_poincare(&generate_square(32).unwrap(), BoundaryTag::Exterior).unwrap();
        let exact = 1.0 / (2.0 * std::f64::consts::PI.powi(2));
        assert!(((est.c_p - exact) / exact).abs() < 0.03, "{}", est.c_p);
        assert!(est.c_p > 0.0);
    }

    #[test]
    fn missing_tag_rejected() {
        assert!(estimate_poincare(&generate_square(4).unwrap(), BoundaryTag::Hole).is_err());
    }
}
