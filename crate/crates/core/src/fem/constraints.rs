use crate::error::{invalid, Result};
use crate::fem::lumped_mass;
use crate::mesh::{BoundaryTag, Mesh};
use crate::sparse::{solve_spd, CsrMatrix, SolverOptions};

/// Record of a symmetric Dirichlet elimination, reusable for further
/// right-hand sides and matrices with the same pattern.
#[derive(Debug, Clone)]
pub struct DirichletConstraint {
    fixed: Vec<bool>,
    dofs: Vec<usize>,
    value: f64,
    lift: Vec<f64>,
}

impl DirichletConstraint {
    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.fixed[i]
    }

    /// Moves the known boundary values to the right-hand side and sets the
    /// constrained entries to the prescribed value.
    pub fn apply_rhs(&self, rhs: &mut [f64]) {
        for (i, r) in rhs.iter_mut().enumerate() {
            if self.fixed[i] {
                *r = self.value;
            } else {
                *r -= self.lift[i];
            }
        }
    }

    /// Zeroes constrained rows and columns and puts 1 on their diagonal.
    /// Zeroed entries stay in the pattern, so the matrix remains
    /// structurally symmetric.
    pub fn apply_matrix(&self, matrix: &mut CsrMatrix) {
        let offsets = matrix.row_offsets().to_vec();
        let cols = matrix.column_indices().to_vec();
        let vals = matrix.values_mut();
        for i in 0..offsets.len() - 1 {
            for k in offsets[i]..offsets[i + 1] {
                let j = cols[k];
                if self.fixed[i] {
                    vals[k] = if i == j { 1.0 } else { 0.0 };
                } else if self.fixed[j] {
                    vals[k] = 0.0;
                }
            }
        }
    }

    /// Writes the prescribed value into the constrained entries of a solution,
    /// removing the round-off left by the iterative solver.
    pub fn enforce(&self, x: &mut [f64]) {
        for &d in &self.dofs {
            x[d] = self.value;
        }
    }

    /// Zeroes the constrained entries of a residual-type vector.
    pub fn zero_fixed(&self, v: &mut [f64]) {
        for &d in &self.dofs {
            v[d] = 0.0;
        }
    }
}

/// Symmetric elimination of `u = value` on the nodes of edges tagged `tag`.
pub fn apply_dirichlet(
    matrix: &mut CsrMatrix,
    rhs: &mut [f64],
    mesh: &Mesh,
    tag: BoundaryTag,
    value: f64,
) -> Result<DirichletConstraint> {
    if !mesh.has_tag(tag) {
        return Err(invalid(format!("mesh has no boundary edges tagged {tag}")));
    }
    let n = mesh.node_count();
    if matrix.dim() != n || rhs.len() != n {
        return Err(invalid("system size does not match the mesh"));
    }
    let dofs = mesh.tagged_nodes(tag);
    let mut fixed = vec![false; n];
    for &d in &dofs {
        fixed[d] = true;
    }
    let mut lift = vec![0.0; n];
    for (i, l) in lift.iter_mut().enumerate() {
        if !fixed[i] {
            *l = matrix.row(i).filter(|&(j, _)| fixed[j]).map(|(_, a)| a * value).sum();
        }
    }
    let c = DirichletConstraint {
        fixed,
        dofs,
        value,
        lift,
    };
    c.apply_matrix(matrix);
    c.apply_rhs(rhs);
    Ok(c)
}

/// Periodic system with slave nodes folded into their masters and the
/// zero-mean condition `∫ u = 0` imposed through one scalar multiplier.
///
/// The multiplier is eliminated in closed form: it is the value that makes
/// the folded right-hand side orthogonal to the constants, after which the
/// singular but consistent system is solved by conjugate gradients and the
/// constant component is removed.
#[derive(Debug, Clone)]
pub struct PeriodicMeanSystem {
    dof_of_node: Vec<usize>,
    matrix: CsrMatrix,
    rhs: Vec<f64>,
    weights: Vec<f64>,
    multiplier: f64,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub fn apply_periodic_and_mean(matrix: &CsrMatrix, rhs: &[f64], mesh: &Mesh) -> Result<PeriodicMeanSystem> {
    let n = mesh.node_count();
    if matrix.dim() != n || rhs.len() != n {
        return Err(invalid("system size does not match the mesh"));
    }
    let pairs = mesh
        .periodic_pairs()
        .ok_or_else(|| invalid("mesh carries no periodic pairs"))?;

    let mut paired = vec![false; n];
    for &(m, s) in pairs {
        paired[m] = true;
        paired[s] = true;
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in mesh.nodes() {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    for (i, p) in mesh.nodes().iter().enumerate() {
        let on_face = p[0] == lo[0] || p[0] == hi[0] || p[1] == lo[1] || p[1] == hi[1];
        if on_face && !paired[i] {
            return Err(invalid(format!(
                "face node {i} at ({}, {}) has no periodic partner",
                p[0], p[1]
            )));
        }
    }

    let mut parent: Vec<usize> = (0..n).collect();
    for &(m, s) in pairs {
        let (a, b) = (find(&mut parent, m), find(&mut parent, s));
        if a != b {
            let (root, child) = if a < b { (a, b) } else { (b, a) };
            parent[child] = root;
        }
    }
    let mut dof_of_root = vec![usize::MAX; n];
    let mut dof_of_node = vec![0usize; n];
    let mut count = 0;
    for i in 0..n {
        let r = find(&mut parent, i);
        if dof_of_root[r] == usize::MAX {
            dof_of_root[r] = count;
            count += 1;
        }
        dof_of_node[i] = dof_of_root[r];
    }

    let mut triplets = Vec::with_capacity(matrix.nnz());
    for i in 0..n {
        for (j, v) in matrix.row(i) {
            triplets.push((dof_of_node[i], dof_of_node[j], v));
        }
    }
    let reduced = CsrMatrix::from_triplets(count, triplets)?;
    let mut b = vec![0.0; count];
    let mut w = vec![0.0; count];
    for (i, wi) in lumped_mass(mesh).into_iter().enumerate() {
        b[dof_of_node[i]] += rhs[i];
        w[dof_of_node[i]] += wi;
    }
    let multiplier = b.iter().sum::<f64>() / w.iter().sum::<f64>();
    for (bi, wi) in b.iter_mut().zip(&w) {
        *bi -= multiplier * wi;
    }
    Ok(PeriodicMeanSystem {
        dof_of_node,
        matrix: reduced,
        rhs: b,
        weights: w,
        multiplier,
    })
}

impl PeriodicMeanSystem {
    pub fn reduced_dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Multiplier of the mean constraint; zero for compatible data.
    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    pub fn dof_of_node(&self) -> &[usize] {
        &self.dof_of_node
    }

    /// Solves and expands back to one value per mesh node.
    pub fn solve(&self, opts: &SolverOptions) -> Result<Vec<f64>> {
        let mut x = solve_spd(&self.matrix, &self.rhs, opts)?.x;
        let mean = x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() / self.weights.iter().sum::<f64>();
        x.iter_mut().for_each(|v| *v -= mean);
        Ok(self.dof_of_node.iter().map(|&d| x[d]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_load, assemble_stiffness};
    use crate::mesh::{generate_cell, generate_square};

    #[test]
    fn dirichlet_keeps_symmetry_and_fixes_values() {
        let mesh = generate_square(8).unwrap();
        let mut k = assemble_stiffness(&mesh, &|_| 1.0).unwrap();
        let mut b = assemble_load(&mesh, &|_| 1.0);
        let c = apply_dirichlet(&mut k, &mut b, &mesh, BoundaryTag::Exterior, 0.25).unwrap();
        assert_eq!(k.asymmetry(), 0.0);
        let mut x = solve_spd(&k, &b, &SolverOptions::default()).unwrap().x;
        assert!(c.dofs().iter().all(|&d| (x[d] - 0.25).abs() < 1e-12));
        c.enforce(&mut x);
        for &d in c.dofs() {
            assert_eq!(x[d], 0.25);
        }
    }

    #[test]
    fn unknown_tag_rejected() {
        let mesh = generate_square(4).unwrap();
        let mut k = assemble_stiffness(&mesh, &|_| 1.0).unwrap();
        let mut b = vec![0.0; mesh.node_count()];
        assert!(apply_dirichlet(&mut k, &mut b, &mesh, BoundaryTag::Hole, 0.0).is_err());
    }

    #[test]
    fn missing_pairs_rejected() {
        let mesh = generate_square(4).unwrap();
        let k = assemble_stiffness(&mesh, &|_| 1.0).unwrap();
        let b = vec![0.0; mesh.node_count()];
        assert!(apply_periodic_and_mean(&k, &b, &mesh).is_err());
    }

    #[test]
    fn periodic_solution_has_zero_mean_and_equal_partners() {
        let mesh = generate_cell(16, 0.3).unwrap();
        let k = assemble_stiffness(&mesh, &|p| 1.0 + 0.5 * p[0]).unwrap();
        // A constant load is compatible only through the multiplier.
        let b = assemble_load(&mesh, &|p| (6.0 * p[0]).sin() + 0.3);
        let sys = apply_periodic_and_mean(&k, &b, &mesh).unwrap();
        assert!(sys.multiplier() != 0.0);
        let x = sys.solve(&SolverOptions::with_tol(1e-12)).unwrap();
        let w = lumped_mass(&mesh);
        let mean: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(mean.abs() < 1e-10 * scale);
        for &(m, s) in mesh.periodic_pairs().unwrap() {
            assert_eq!(x[m].to_bits(), x[s].to_bits());
        }
    }
}
