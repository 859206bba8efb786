use super::map_point;
use crate::error::{invalid, Error, Result};
use crate::mesh::{Mesh, Point};
use crate::sparse::CsrMatrix;

/// Edge-midpoint rule (barycentric points, equal weights 1/3); exact for
/// quadratics. Used for variable coefficients and loads.
pub const MIDPOINT_RULE: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];

/// Interior three-point rule, also exact for quadratics. Used for error
/// integrals so that quadrature points avoid element edges.
pub const INTERIOR_RULE: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

fn midpoint_average(v: &[Point; 3], coef: &dyn Fn(Point) -> f64) -> Result<f64> {
    let mut s = 0.0;
    for lam in &MIDPOINT_RULE {
        let x = map_point(v, lam);
        let a = coef(x);
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::EllipticityViolation {
                value: a,
                x: x[0],
                y: x[1],
            });
        }
        s += a;
    }
    Ok(s / 3.0)
}

/// Stiffness matrix of `∫ a(x) ∇u·∇φ` with the coefficient sampled at edge
/// midpoints. Rows sum to zero before constraints are applied.
pub fn assemble_stiffness(mesh: &Mesh, coef: &dyn Fn(Point) -> f64) -> Result<CsrMatrix> {
    let mut k = CsrMatrix::from_elements(mesh.node_count(), mesh.triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let abar = midpoint_average(&mesh.vertices(t), coef)?;
        let (g, area) = mesh.basis_gradients(t);
        let mut local = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                local[a][b] = abar * area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
            }
        }
        k.add_local(tri, &local);
    }
    Ok(k)
}

/// Stiffness matrix of `∫ (A ∇u)·∇φ` for a constant symmetric positive
/// definite 2x2 tensor.
pub fn assemble_stiffness_tensor(mesh: &Mesh, tensor: [[f64; 2]; 2]) -> Result<CsrMatrix> {
    let sym = 0.5 * (tensor[0][1] + tensor[1][0]);
    let det = tensor[0][0] * tensor[1][1] - sym * sym;
    if !(tensor[0][0] > 0.0 && det > 0.0) {
        return Err(invalid(format!("diffusion tensor {tensor:?} is not positive definite")));
    }
    let mut k = CsrMatrix::from_elements(mesh.node_count(), mesh.triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (g, area) = mesh.basis_gradients(t);
        let mut local = [[0.0; 3]; 3];
        for a in 0..3 {
            let ag = [
                tensor[0][0] * g[a][0] + tensor[0][1] * g[a][1],
                tensor[1][0] * g[a][0] + tensor[1][1] * g[a][1],
            ];
            for b in 0..3 {
                local[b][a] = area * (ag[0] * g[b][0] + ag[1] * g[b][1]);
            }
        }
        // Symmetrize so that the assembled matrix is exactly symmetric.
        for a in 0..3 {
            for b in (a + 1)..3 {
                let m = 0.5 * (local[a][b] + local[b][a]);
                local[a][b] = m;
                local[b][a] = m;
            }
        }
        k.add_local(tri, &local);
    }
    Ok(k)
}

/// Consistent P1 mass matrix, (area / 12) [[2,1,1],[1,2,1],[1,1,2]] per element.
pub fn assemble_mass(mesh: &Mesh) -> CsrMatrix {
    let mut m = CsrMatrix::from_elements(mesh.node_count(), mesh.triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        let d = area / 6.0;
        let o = area / 12.0;
        m.add_local(tri, &[[d, o, o], [o, d, o], [o, o, d]]);
    }
    m
}

/// Row sums of the mass matrix, `∫ φ_i`.
pub fn lumped_mass(mesh: &Mesh) -> Vec<f64> {
    let mut w = vec![0.0; mesh.node_count()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let third = mesh.triangle_area(t) / 3.0;
        for &v in tri {
            w[v] += third;
        }
    }
    w
}

/// Load vector `∫ f φ_i` with the edge-midpoint rule.
pub fn assemble_load(mesh: &Mesh, source: &dyn Fn(Point) -> f64) -> Vec<f64> {
    let mut b = vec![0.0; mesh.node_count()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let v = mesh.vertices(t);
        let w = mesh.triangle_area(t) / 3.0;
        for lam in &MIDPOINT_RULE {
            let f = source(map_point(&v, lam));
            for a in 0..3 {
                b[tri[a]] += w * f * lam[a];
            }
        }
    }
    b
}

/// Flux load `∫ a(x) e·∇φ_i` for the unit vector `e` along `direction`
/// (0 = x, 1 = y).
pub fn assemble_flux_load(mesh: &Mesh, coef: &dyn Fn(Point) -> f64, direction: usize) -> Result<Vec<f64>> {
    if direction > 1 {
        return Err(invalid(format!("direction must be 0 or 1, got {direction}")));
    }
    let mut b = vec![0.0; mesh.node_count()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let abar = midpoint_average(&mesh.vertices(t), coef)?;
        let (g, area) = mesh.basis_gradients(t);
        for a in 0..3 {
            b[tri[a]] += abar * area * g[a][direction];
        }
    }
    Ok(b)
}

/// Smallest coefficient value over all edge-midpoint quadrature points.
pub fn coefficient_minimum(mesh: &Mesh, coef: &dyn Fn(Point) -> f64) -> f64 {
    let mut best = f64::INFINITY;
    for t in 0..mesh.triangle_count() {
        let v = mesh.vertices(t);
        for lam in &MIDPOINT_RULE {
            best = best.min(coef(map_point(&v, lam)));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{
        generate_cell, generate_perforated, generate_square, BoundaryEdge, BoundaryTag, PerforationSpec,
    };

    fn reference() -> Mesh {
        Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            vec![
                BoundaryEdge {
                    nodes: [0, 1],
                    tag: BoundaryTag::Exterior,
                },
                BoundaryEdge {
                    nodes: [1, 2],
                    tag: BoundaryTag::Exterior,
                },
                BoundaryEdge {
                    nodes: [2, 0],
                    tag: BoundaryTag::Exterior,
                },
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn reference_stiffness() {
        let k = assemble_stiffness(&reference(), &|_| 1.0).unwrap();
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k.get(i, j) - expected[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reference_mass_and_load() {
        let m = assemble_mass(&reference());
        let area = 0.5;
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 2.0 } else { 1.0 } * area / 12.0;
                assert!((m.get(i, j) - e).abs() < 1e-16);
            }
        }
        let b = assemble_load(&reference(), &|_| 1.0);
        for bi in b {
            assert!((bi - area / 3.0).abs() < 1e-16);
        }
    }

    #[test]
    fn constants_in_kernel_and_linearity() {
        let mesh = generate_cell(16, 0.4).unwrap();
        let coef = |p: Point| {
            1.0 / (2.0 + (2.0 * std::f64::consts::PI * p[0]).cos() * (2.0 * std::f64::consts::PI * p[1]).cos())
        };
        let k = assemble_stiffness(&mesh, &coef).unwrap();
        let kc = k.mul_vec(&vec![3.0; mesh.node_count()]);
        assert!(kc.iter().all(|v| v.abs() < 1e-12));
        assert!(k.asymmetry() < 1e-14);
        assert!(k.is_structurally_symmetric());

        let k1 = assemble_stiffness(&mesh, &|_| 1.0).unwrap();
        let k2 = assemble_stiffness(&mesh, &|_| 2.0).unwrap();
        for (a, b) in k1.values().iter().zip(k2.values()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn non_positive_coefficient_rejected() {
        let mesh = generate_square(4).unwrap();
        let e = assemble_stiffness(&mesh, &|p| p[0] - 0.5).unwrap_err();
        assert!(matches!(e, Error::EllipticityViolation { .. }));
    }

    #[test]
    fn mass_sums_to_area() {
        let sq = generate_square(16).unwrap();
        let total: f64 = assemble_mass(&sq).values().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);

        let perf = generate_perforated(16, &PerforationSpec::new(0.25, 0.4).unwrap()).unwrap();
        let total: f64 = assemble_mass(&perf).values().iter().sum();
        assert!((total - perf.area()).abs() < 1e-12);
        let load: f64 = assemble_load(&perf, &|_| 1.0).iter().sum();
        assert!((load - perf.area()).abs() < 1e-12);
        assert!(assemble_load(&perf, &|_| 0.0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tensor_stiffness_matches_scalar() {
        let mesh = generate_square(6).unwrap();
        let a = assemble_stiffness_tensor(&mesh, [[2.0, 0.0], [0.0, 2.0]]).unwrap();
        let b = assemble_stiffness(&mesh, &|_| 2.0).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(assemble_stiffness_tensor(&mesh, [[1.0, 2.0], [2.0, 1.0]]).is_err());
    }
}
