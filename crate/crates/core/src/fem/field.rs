use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::mesh::{Mesh, Point};

/// Shareable scalar function of position.
#[derive(Clone)]
pub struct ScalarFn(Arc<dyn Fn(Point) -> f64 + Send + Sync>);

impl ScalarFn {
    pub fn new(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        ScalarFn(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        ScalarFn::new(move |_| c)
    }

    pub fn eval(&self, p: Point) -> f64 {
        (self.0)(p)
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarFn")
    }
}

/// P1 field: one value per node of its mesh.
#[derive(Debug, Clone)]
pub struct FeField {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl FeField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.node_count() {
            return Err(invalid(format!(
                "field has {} values for a mesh with {} nodes",
                values.len(),
                mesh.node_count()
            )));
        }
        Ok(FeField { mesh, values })
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: Arc<Mesh>, f: &dyn Fn(Point) -> f64) -> Self {
        let values = mesh.nodes().iter().map(|&p| f(p)).collect();
        FeField { mesh, values }
    }

    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let values = vec![0.0; mesh.node_count()];
        FeField { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at triangle `t` with barycentric coordinates `lam`.
    pub fn value_in(&self, t: usize, lam: &[f64; 3]) -> f64 {
        let tri = self.mesh.triangles()[t];
        lam[0] * self.values[tri[0]] + lam[1] * self.values[tri[1]] + lam[2] * self.values[tri[2]]
    }

    /// Constant gradient on triangle `t`.
    pub fn gradient_in(&self, t: usize) -> [f64; 2] {
        let tri = self.mesh.triangles()[t];
        let (g, _) = self.mesh.basis_gradients(t);
        let mut out = [0.0; 2];
        for a in 0..3 {
            out[0] += self.values[tri[a]] * g[a][0];
            out[1] += self.values[tri[a]] * g[a][1];
        }
        out
    }

    /// Barycentric interpolation at an arbitrary point.
    pub fn evaluate(&self, p: Point) -> Result<f64> {
        let loc = self
            .mesh
            .locator()
            .locate(p)
            .ok_or(Error::OutOfDomain { x: p[0], y: p[1] })?;
        Ok(self.value_in(loc.triangle, &loc.barycentric))
    }

    /// Gradient of the triangle containing `p`.
    pub fn gradient(&self, p: Point) -> Result<[f64; 2]> {
        let loc = self
            .mesh
            .locator()
            .locate(p)
            .ok_or(Error::OutOfDomain { x: p[0], y: p[1] })?;
        Ok(self.gradient_in(loc.triangle))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `sqrt(uᵀ M u)` with the consistent mass matrix, computed element by element.
pub fn l2_norm(field: &FeField) -> f64 {
    let mesh = field.mesh();
    let u = field.values();
    let mut s = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = [u[tri[0]], u[tri[1]], u[tri[2]]];
        let sum = a[0] + a[1] + a[2];
        let sq = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
        s += mesh.triangle_area(t) / 12.0 * (sq + sum * sum);
    }
    s.max(0.0).sqrt()
}

/// `sqrt(uᵀ K u)` with the unit-coefficient stiffness matrix.
pub fn h1_seminorm(field: &FeField) -> f64 {
    let mesh = field.mesh();
    let mut s = 0.0;
    for t in 0..mesh.triangle_count() {
        let g = field.gradient_in(t);
        s += mesh.triangle_area(t) * (g[0] * g[0] + g[1] * g[1]);
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_mass, assemble_stiffness};
    use crate::mesh::{generate_perforated, generate_square, PerforationSpec};
    use proptest::prelude::*;

    #[test]
    fn constant_and_linear_norms() {
        let mesh = Arc::new(generate_perforated(8, &PerforationSpec::new(0.5, 0.3).unwrap()).unwrap());
        let c = FeField::interpolate(mesh.clone(), &|_| 2.5);
        assert!((l2_norm(&c) - 2.5 * mesh.area().sqrt()).abs() < 1e-12);
        assert!(h1_seminorm(&c) < 1e-12);

        let sq = Arc::new(generate_square(8).unwrap());
        let x = FeField::interpolate(sq, &|p| p[0]);
        assert!((h1_seminorm(&x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn norms_match_quadratic_forms() {
        let mesh = Arc::new(generate_square(10).unwrap());
        let f = FeField::interpolate(mesh.clone(), &|p| (3.0 * p[0]).sin() * p[1]);
        let m = assemble_mass(&mesh).quadratic_form(f.values());
        let k = assemble_stiffness(&mesh, &|_| 1.0).unwrap().quadratic_form(f.values());
        assert!((l2_norm(&f) - m.sqrt()).abs() < 1e-13);
        assert!((h1_seminorm(&f) - k.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn evaluate_nodes_and_outside() {
        let mesh = Arc::new(generate_perforated(8, &PerforationSpec::new(0.5, 0.3).unwrap()).unwrap());
        let f = FeField::interpolate(mesh.clone(), &|p| p[0] * p[0] - p[1]);
        for (i, &p) in mesh.nodes().iter().enumerate() {
            assert!((f.evaluate(p).unwrap() - f.values()[i]).abs() < 1e-12);
        }
        assert!(matches!(f.evaluate([0.25, 0.25]), Err(Error::OutOfDomain { .. })));
        assert!(matches!(f.evaluate([2.0, 0.5]), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn wrong_length_rejected() {
        let mesh = Arc::new(generate_square(2).unwrap());
        assert!(FeField::new(mesh, vec![0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn linear_fields_reproduced(a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64,
                                    x in 0.0..1.0f64, y in 0.0..1.0f64) {
            let mesh = Arc::new(generate_square(7).unwrap());
            let f = FeField::interpolate(mesh, &|p| a * p[0] + b * p[1] + c);
            let v = f.evaluate([x, y]).unwrap();
            prop_assert!((v - (a * x + b * y + c)).abs() < 1e-12);
            let g = f.gradient([x, y]).unwrap();
            prop_assert!((g[0] - a).abs() < 1e-11 && (g[1] - b).abs() < 1e-11);
        }
    }
}
