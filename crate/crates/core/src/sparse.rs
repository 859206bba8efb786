//! Compressed-row sparse matrices and a Jacobi-preconditioned conjugate
//! gradient solver.

use crate::error::{invalid, Error, Result};

/// Square matrix in compressed sparse row layout with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    column_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the symmetric sparsity pattern induced by the given
    /// element connectivity (every pair of nodes sharing an element).
    pub fn from_elements(n: usize, elements: &[[usize; 3]]) -> Self {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for e in elements {
            for &a in e {
                for &b in e {
                    rows[a].push(b);
                }
            }
        }
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut column_indices = Vec::new();
        row_offsets.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            column_indices.extend(r);
            row_offsets.push(column_indices.len());
        }
        let nnz = column_indices.len();
        CsrMatrix {
            n,
            row_offsets,
            column_indices,
            values: vec![0.0; nnz],
        }
    }

    /// Builds a matrix from (row, column, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if triplets.iter().any(|&(i, j, _)| i >= n || j >= n) {
            return Err(invalid("triplet index out of range"));
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_offsets = vec![0usize; n + 1];
        let mut column_indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                column_indices.push(j);
                values.push(v);
                row_offsets[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(CsrMatrix {
            n,
            row_offsets,
            column_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        CsrMatrix {
            n: d.len(),
            row_offsets: (0..=d.len()).collect(),
            column_indices: (0..d.len()).collect(),
            values: d.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn column_indices(&self) -> &[usize] {
        &self.column_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entries of row `i` as (column, value) pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        self.column_indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_offsets[i];
        let cols = &self.column_indices[start..self.row_offsets[i + 1]];
        cols.binary_search(&j).ok().map(|k| start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds `v` to entry (i, j), which must be in the sparsity pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) is outside the sparsity pattern"));
        self.values[k] += v;
    }

    pub fn add_local(&mut self, dofs: &[usize; 3], local: &[[f64; 3]; 3]) {
        for a in 0..3 {
            for b in 0..3 {
                self.add(dofs[a], dofs[b], local[a][b]);
            }
        }
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                s += self.values[k] * x[self.column_indices[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// x^T A x
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    /// `self + alpha * other`; both matrices must share a sparsity pattern.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.row_offsets != other.row_offsets || self.column_indices != other.column_indices {
            return Err(invalid("matrices have different sparsity patterns"));
        }
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v += alpha * w;
        }
        Ok(out)
    }

    pub fn scaled(&self, alpha: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// Largest |a_ij - a_ji| over all stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// True when the pattern contains (j, i) for every stored (i, j).
    pub fn is_structurally_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, _)| self.position(j, i).is_some()))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target ||b - A x|| / ||b||.
    pub tol: f64,
    /// Iteration cap; `None` means 50 sqrt(n).
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: None,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions { tol, max_iter: None }
    }

    fn cap(&self, n: usize) -> usize {
        self.max_iter
            .unwrap_or_else(|| ((50.0 * (n as f64).sqrt()).ceil() as usize).max(50))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// (semi-)definite system. A consistent right-hand side is required in the
/// semidefinite case.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<Solution> {
    solve_spd_from(a, b, None, opts)
}

/// As [`solve_spd`] with an optional initial guess.
pub fn solve_spd_from(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, opts: &SolverOptions) -> Result<Solution> {
    let n = a.dim();
    if b.len() != n || x0.is_some_and(|x| x.len() != n) {
        return Err(invalid("right-hand side length does not match the matrix"));
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(Solution {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = b.to_vec();
    if x0.is_some() {
        let ax = a.mul_vec(&x);
        r.iter_mut().zip(&ax).for_each(|(ri, axi)| *ri -= axi);
    }
    let mut res = norm2(&r) / bnorm;
    if res <= opts.tol {
        return Ok(Solution {
            x,
            iterations: 0,
            relative_residual: res,
        });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let cap = opts.cap(n);

    for it in 1..=cap {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NonConvergence {
                solver: "conjugate gradient",
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm2(&r) / bnorm;
        if res <= opts.tol {
            return Ok(Solution {
                x,
                iterations: it,
                relative_residual: res,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence {
        solver: "conjugate gradient",
        iterations: cap,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_in_one_iteration() {
        let a = CsrMatrix::identity(5);
        let b = vec![1.0, -2.0, 3.0, 0.5, 4.0];
        let s = solve_spd(&a, &b, &SolverOptions::default()).unwrap();
        assert_eq!(s.iterations, 1);
        assert_eq!(s.x, b);
    }

    #[test]
    fn diagonal_system() {
        let d: Vec<f64> = (1..=20).map(f64::from).collect();
        let a = CsrMatrix::from_diagonal(&d);
        let b = vec![1.0; 20];
        let s = solve_spd(&a, &b, &SolverOptions::default()).unwrap();
        for (i, xi) in s.x.iter().enumerate() {
            assert!((xi - 1.0 / (i + 1) as f64).abs() < 1e-14);
        }
        assert!(s.relative_residual < 1e-10);
    }

    #[test]
    fn tridiagonal_system_and_cap() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, t).unwrap();
        assert_eq!(a.asymmetry(), 0.0);
        let b = vec![1.0; n];
        let s = solve_spd(&a, &b, &SolverOptions::default()).unwrap();
        let r: f64 = a
            .mul_vec(&s.x)
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(r / norm2(&b) < 1e-10);

        let capped = SolverOptions {
            tol: 1e-14,
            max_iter: Some(3),
        };
        match solve_spd(&a, &b, &capped) {
            Err(Error::NonConvergence {
                iterations, residual, ..
            }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0)]).unwrap();
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 0), 4.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert!(!a.is_structurally_symmetric());
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = CsrMatrix::identity(3);
        let s = solve_spd(&a, &[0.0; 3], &SolverOptions::default()).unwrap();
        assert_eq!(s.x, vec![0.0; 3]);
    }
}
