//! Periodic cell problems, the homogenized tensor, and the macroscopic
//! L-scheme on the unperforated square.

use std::sync::{Arc, OnceLock};

use crate::error::{invalid, Result};
use crate::fem::{
    apply_dirichlet, apply_periodic_and_mean, assemble_flux_load, assemble_load, assemble_mass, assemble_stiffness,
    assemble_stiffness_tensor, estimate_poincare, h1_seminorm, l2_norm, lumped_mass, map_point, DirichletConstraint,
    FeField, ScalarFn, MIDPOINT_RULE,
};
use crate::mesh::{generate_cell, BoundaryTag, Mesh};
use crate::micro::{ContractionTheory, IterationRecord, LSchemeTrace};
use crate::reaction::{GammaSchedule, ReactionSpec};
use crate::sparse::{solve_spd, CsrMatrix, SolverOptions};

/// Solutions `χ₁, χ₂` of the two cell problems.
#[derive(Debug, Clone)]
pub struct CellFunctions {
    pub chi: [FeField; 2],
}

impl CellFunctions {
    pub fn mesh(&self) -> &Arc<Mesh> {
        self.chi[0].mesh()
    }
}

/// Solves `−∇·A(y)(∇χ_i + e_i) = 0` in the cell with zero flux on the hole,
/// periodic faces and zero mean.
pub fn solve_cell_problems(mesh: Arc<Mesh>, coefficient: &ScalarFn, opts: &SolverOptions) -> Result<CellFunctions> {
    let coef = |y: [f64; 2]| coefficient.eval(y);
    let k = assemble_stiffness(&mesh, &coef)?;
    let mut chi = Vec::with_capacity(2);
    for dir in 0..2 {
        let rhs: Vec<f64> = assemble_flux_load(&mesh, &coef, dir)?.into_iter().map(|v| -v).collect();
        let sys = apply_periodic_and_mean(&k, &rhs, &mesh)?;
        chi.push(FeField::new(mesh.clone(), sys.solve(opts)?)?);
    }
    let [a, b]: [FeField; 2] = chi.try_into().expect("two directions");
    Ok(CellFunctions { chi: [a, b] })
}

/// Effective tensor `A⁰` and the cell porosity `|Y_l|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogenizedTensor {
    pub a0: [[f64; 2]; 2],
    pub porosity: f64,
}

impl HomogenizedTensor {
    pub fn new(a0: [[f64; 2]; 2], porosity: f64) -> Result<Self> {
        let t = HomogenizedTensor { a0, porosity };
        if !(porosity > 0.0 && porosity <= 1.0) {
            return Err(invalid(format!("porosity must lie in (0, 1], got {porosity}")));
        }
        if !(t.min_eigenvalue() > 0.0) {
            return Err(invalid(format!("tensor {a0:?} is not positive definite")));
        }
        Ok(t)
    }

    pub fn asymmetry(&self) -> f64 {
        (self.a0[0][1] - self.a0[1][0]).abs()
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let a = self.a0[0][0];
        let d = self.a0[1][1];
        let b = 0.5 * (self.a0[0][1] + self.a0[1][0]);
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        [mean - rad, mean + rad]
    }

    /// Ellipticity constant `|A⁰|` used in the macroscopic contraction factor.
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Whether a Cholesky factorization of the symmetric part succeeds.
    pub fn is_positive_definite(&self) -> bool {
        let a = self.a0[0][0];
        let b = 0.5 * (self.a0[0][1] + self.a0[1][0]);
        a > 0.0 && self.a0[1][1] - b * b / a > 0.0
    }
}

/// `a0_ij = ∫ A(y)(δ_ij + ∂_i χ_j) dy` over the cell mesh.
pub fn homogenized_tensor(cells: &CellFunctions, coefficient: &ScalarFn) -> Result<HomogenizedTensor> {
    let mesh = cells.mesh();
    let mut a0 = [[0.0; 2]; 2];
    for t in 0..mesh.triangle_count() {
        let v = mesh.vertices(t);
        let abar = MIDPOINT_RULE
            .iter()
            .map(|lam| coefficient.eval(map_point(&v, lam)))
            .sum::<f64>()
            / 3.0;
        let w = abar * mesh.triangle_area(t);
        for j in 0..2 {
            let g = cells.chi[j].gradient_in(t);
            for (i, row) in a0.iter_mut().enumerate() {
                row[j] += w * (if i == j { 1.0 } else { 0.0 } + g[i]);
            }
        }
    }
    HomogenizedTensor::new(a0, mesh.area())
}

/// `∫ A(y) dy` over the mesh, the upper bound for the diagonal of `A⁰`.
pub fn voigt_bound(mesh: &Mesh, coefficient: &ScalarFn) -> f64 {
    (0..mesh.triangle_count())
        .map(|t| {
            let v = mesh.vertices(t);
            mesh.triangle_area(t)
                * MIDPOINT_RULE
                    .iter()
                    .map(|lam| coefficient.eval(map_point(&v, lam)))
                    .sum::<f64>()
                / 3.0
        })
        .sum()
}

/// Generates the cell mesh, solves the cell problems and assembles `A⁰`.
pub fn compute_homogenized(
    cell_n: usize,
    hole_radius: f64,
    coefficient: &ScalarFn,
) -> Result<(CellFunctions, HomogenizedTensor)> {
    let mesh = Arc::new(generate_cell(cell_n, hole_radius)?);
    let cells = solve_cell_problems(mesh, coefficient, &SolverOptions::with_tol(1e-12))?;
    let tensor = homogenized_tensor(&cells, coefficient)?;
    Ok((cells, tensor))
}

/// Branch of the macroscopic equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaCase {
    /// α > 0: the reaction disappears in the limit.
    Positive,
    /// α = 0: the limit keeps the reaction, weighted by the porosity.
    Zero,
}

impl AlphaCase {
    pub fn from_alpha(alpha: f64) -> Self {
        if alpha > 0.0 {
            AlphaCase::Positive
        } else {
            AlphaCase::Zero
        }
    }
}

#[derive(Debug, Clone)]
pub struct MacroConfig {
    pub alpha_case: AlphaCase,
    pub eta: f64,
    pub reaction: ReactionSpec,
    pub schedule: GammaSchedule,
    pub source: ScalarFn,
    pub k_max: usize,
    pub stop_tol: f64,
    pub solver: SolverOptions,
    pub tensor: HomogenizedTensor,
    pub diagnostics: bool,
}

impl MacroConfig {
    pub fn standard(tensor: HomogenizedTensor) -> Self {
        MacroConfig {
            alpha_case: AlphaCase::Zero,
            eta: 0.4,
            reaction: ReactionSpec::power_law(2.0).expect("p = 2 is valid"),
            schedule: GammaSchedule::Geometric { p: 2.0 },
            source: ScalarFn::constant(1.0),
            k_max: 30,
            stop_tol: 1e-8,
            solver: SolverOptions::default(),
            tensor,
            diagnostics: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(invalid(format!("eta must be positive, got {}", self.eta)));
        }
        if self.k_max == 0 {
            return Err(invalid("k_max must be at least 1"));
        }
        if !(self.stop_tol > 0.0) {
            return Err(invalid(format!("stop_tol must be positive, got {}", self.stop_tol)));
        }
        Ok(())
    }

    /// Mass coefficient of the linearized operator: `η|Y|` for α > 0,
    /// `(η + δ₁)|Y|` for α = 0.
    pub fn stabilization(&self) -> f64 {
        let y = self.tensor.porosity;
        match self.alpha_case {
            AlphaCase::Positive => self.eta * y,
            AlphaCase::Zero => (self.eta + self.reaction.delta1()) * y,
        }
    }

    /// Analytic contraction factor `stab / (|A⁰| c_p⁻¹ + stab)`.
    pub fn contraction_factor(&self, poincare: f64) -> f64 {
        let s = self.stabilization();
        s / (self.tensor.min_eigenvalue() / poincare + s)
    }
}

/// Operators of the macroscopic problem on the square.
#[derive(Debug)]
pub struct MacroProblem {
    mesh: Arc<Mesh>,
    config: MacroConfig,
    stiffness: CsrMatrix,
    constrained_stiffness: CsrMatrix,
    system: CsrMatrix,
    lumped: Vec<f64>,
    load: Vec<f64>,
    constraint: DirichletConstraint,
    theory: OnceLock<ContractionTheory>,
}

impl MacroProblem {
    pub fn new(mesh: Arc<Mesh>, config: MacroConfig) -> Result<Self> {
        config.validate()?;
        let stiffness = assemble_stiffness_tensor(&mesh, config.tensor.a0)?;
        let mass = assemble_mass(&mesh);
        let source = config.source.clone();
        let y = config.tensor.porosity;
        let load: Vec<f64> = assemble_load(&mesh, &|x| source.eval(x))
            .into_iter()
            .map(|v| y * v)
            .collect();
        let mut system = stiffness.add_scaled(config.stabilization(), &mass)?;
        let mut scratch = vec![0.0; mesh.node_count()];
        let constraint = apply_dirichlet(&mut system, &mut scratch, &mesh, BoundaryTag::Exterior, 0.0)?;
        let mut constrained_stiffness = stiffness.clone();
        constraint.apply_matrix(&mut constrained_stiffness);
        let lumped = lumped_mass(&mesh);
        Ok(MacroProblem {
            mesh,
            config,
            stiffness,
            constrained_stiffness,
            system,
            lumped,
            load,
            constraint,
            theory: OnceLock::new(),
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn config(&self) -> &MacroConfig {
        &self.config
    }

    pub fn theory(&self) -> Result<ContractionTheory> {
        if let Some(t) = self.theory.get() {
            return Ok(*t);
        }
        let cp = estimate_poincare(&self.mesh, BoundaryTag::Exterior)?.c_p;
        let omega = match self.config.alpha_case {
            AlphaCase::Positive => None,
            AlphaCase::Zero => self.config.schedule.omega(),
        };
        let t = ContractionTheory::new(
            self.config.tensor.min_eigenvalue(),
            cp,
            self.config.stabilization(),
            omega,
        );
        Ok(*self.theory.get_or_init(|| t))
    }

    fn field(&self, values: Vec<f64>) -> FeField {
        FeField::new(self.mesh.clone(), values).expect("length matches the mesh")
    }

    fn step_increment(&self, prev: &[f64], k: usize) -> Result<(FeField, usize)> {
        if prev.len() != self.mesh.node_count() {
            return Err(invalid("previous iterate does not match the mesh"));
        }
        let ku = self.stiffness.mul_vec(prev);
        let mut rhs: Vec<f64> = (0..prev.len()).map(|i| self.load[i] - ku[i]).collect();
        if self.config.alpha_case == AlphaCase::Zero {
            let gamma = self.config.schedule.gamma(k)?;
            let r = self.config.reaction.regularized_map(gamma, prev)?;
            let y = self.config.tensor.porosity;
            for i in 0..prev.len() {
                rhs[i] -= y * self.lumped[i] * r[i];
            }
        }
        self.constraint.zero_fixed(&mut rhs);
        let sol = solve_spd(&self.system, &rhs, &self.config.solver)?;
        let mut next: Vec<f64> = prev.iter().zip(&sol.x).map(|(a, b)| a + b).collect();
        self.constraint.enforce(&mut next);
        Ok((self.field(next), sol.iterations))
    }

    /// One step of the macroscopic L-scheme.
    pub fn step(&self, previous: &FeField, k: usize) -> Result<FeField> {
        Ok(self.step_increment(previous.values(), k)?.0)
    }

    pub fn run_lscheme(&self) -> Result<(FeField, LSchemeTrace)> {
        self.run_lscheme_with(|_, _| {})
    }

    pub fn run_lscheme_with(&self, mut observer: impl FnMut(usize, &FeField)) -> Result<(FeField, LSchemeTrace)> {
        let mut trace = LSchemeTrace::default();
        if self.config.diagnostics {
            trace.theory = Some(self.theory()?);
        }
        let mut u = FeField::zeros(self.mesh.clone());
        let mut last: Option<f64> = None;
        for k in 1..=self.config.k_max {
            let (next, its) = self.step_increment(u.values(), k)?;
            let w: Vec<f64> = next.values().iter().zip(u.values()).map(|(a, b)| a - b).collect();
            let wf = self.field(w);
            let diff_l2 = l2_norm(&wf);
            let norm = l2_norm(&next);
            let relative_diff = if norm > 0.0 { diff_l2 / norm } else { 0.0 };
            let ratio = match last {
                Some(d) if k >= 3 && d > 0.0 => Some(diff_l2 / d),
                _ => None,
            };
            trace.records.push(IterationRecord {
                k,
                gamma: self.config.schedule.gamma(k)?,
                diff_l2,
                diff_grad: h1_seminorm(&wf),
                diff_linf: wf.max_abs(),
                relative_diff,
                ratio,
                solver_iterations: its,
            });
            last = Some(diff_l2);
            observer(k, &next);
            u = next;
            if relative_diff < self.config.stop_tol {
                trace.converged = true;
                break;
            }
        }
        Ok((u, trace))
    }

    /// Solution of `−∇·A⁰∇u = |Y| f`, the limit of the α > 0 branch.
    pub fn solve_linear(&self) -> Result<FeField> {
        let mut rhs = self.load.clone();
        self.constraint.apply_rhs(&mut rhs);
        let mut x = solve_spd(&self.constrained_stiffness, &rhs, &self.config.solver)?.x;
        self.constraint.enforce(&mut x);
        Ok(self.field(x))
    }
}

/// Max-norm successive differences and their fitted polynomial decay.
#[derive(Debug, Clone, PartialEq)]
pub struct LinfDiagnostic {
    /// `(k, d_k)` pairs.
    pub differences: Vec<(usize, f64)>,
    /// `-slope` of `log d_k` against `log(k+1)` over the fitted range.
    pub exponent: f64,
}

/// Fits `d_k ≈ C (k+1)^{−s}` over `k_from..=k_to` and returns `s`.
pub fn linf_stability(trace: &LSchemeTrace, k_from: usize, k_to: usize) -> Result<LinfDiagnostic> {
    let differences: Vec<(usize, f64)> = trace.records.iter().map(|r| (r.k, r.diff_linf)).collect();
    let pts: Vec<(f64, f64)> = differences
        .iter()
        .filter(|(k, d)| *k >= k_from && *k <= k_to && *d > 0.0)
        .map(|&(k, d)| (((k + 1) as f64).ln(), d.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(invalid("fewer than two positive differences in the fitting range"));
    }
    let slope = crate::experiments::least_squares_slope(&pts);
    Ok(LinfDiagnostic {
        differences,
        exponent: -slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_square;
    use crate::micro::oscillatory_coefficient;

    #[test]
    fn constant_coefficient_solid_cell() {
        let (cells, t) = compute_homogenized(16, 0.0, &ScalarFn::constant(2.0)).unwrap();
        for c in &cells.chi {
            assert!(c.max_abs() < 1e-12);
        }
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 2.0 } else { 0.0 };
                assert!((t.a0[i][j] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_coefficient_with_hole() {
        let (_, t) = compute_homogenized(32, 0.3, &ScalarFn::constant(1.0)).unwrap();
        assert!(t.asymmetry() < 1e-8);
        assert!(t.a0[0][0] < t.porosity && t.a0[1][1] < t.porosity);
        assert!(t.is_positive_definite());
    }

    #[test]
    fn cell_functions_invariants_and_swap_symmetry() {
        let coef = oscillatory_coefficient();
        let (cells, t) = compute_homogenized(32, 0.4, &coef).unwrap();
        let mesh = cells.mesh().clone();
        let w = lumped_mass(&mesh);
        for c in &cells.chi {
            let mean: f64 = c.values().iter().zip(&w).map(|(a, b)| a * b).sum();
            assert!(mean.abs() < 1e-10 * l2_norm(c));
            assert!(c.max_abs() > 1e-3);
            for &(m, s) in mesh.periodic_pairs().unwrap() {
                assert_eq!(c.values()[m].to_bits(), c.values()[s].to_bits());
            }
        }
        for (i, p) in mesh.nodes().iter().enumerate() {
            let swapped = cells.chi[0].evaluate([p[1], p[0]]).unwrap();
            assert!((cells.chi[1].values()[i] - swapped).abs() < 1e-3);
        }
        assert!(t.a0[0][0] <= voigt_bound(&mesh, &coef) + 1e-6);
    }

    fn macro_problem(case: AlphaCase, edit: impl FnOnce(&mut MacroConfig)) -> MacroProblem {
        let tensor = HomogenizedTensor::new([[0.19, 0.0], [0.0, 0.19]], 0.5).unwrap();
        let mut cfg = MacroConfig::standard(tensor);
        cfg.alpha_case = case;
        cfg.diagnostics = false;
        edit(&mut cfg);
        MacroProblem::new(Arc::new(generate_square(24).unwrap()), cfg).unwrap()
    }

    #[test]
    fn positive_branch_converges_to_linear_solve() {
        let p = macro_problem(AlphaCase::Positive, |_| {});
        let (u, trace) = p.run_lscheme().unwrap();
        assert!(trace.converged);
        let lin = p.solve_linear().unwrap();
        let d: Vec<f64> = u.values().iter().zip(lin.values()).map(|(a, b)| a - b).collect();
        assert!(l2_norm(&FeField::new(p.mesh().clone(), d).unwrap()) / l2_norm(&lin) < 1e-7);
        for &i in &p.mesh().tagged_nodes(BoundaryTag::Exterior) {
            assert_eq!(u.values()[i], 0.0);
        }
    }

    #[test]
    fn zero_source_is_fixed_point() {
        for case in [AlphaCase::Positive, AlphaCase::Zero] {
            let p = macro_problem(case, |c| c.source = ScalarFn::constant(0.0));
            let (u, trace) = p.run_lscheme().unwrap();
            assert_eq!(trace.iterations(), 1);
            assert!(u.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn tensor_validation() {
        assert!(HomogenizedTensor::new([[1.0, 2.0], [2.0, 1.0]], 0.5).is_err());
        assert!(HomogenizedTensor::new([[1.0, 0.0], [0.0, 1.0]], 0.0).is_err());
        let t = HomogenizedTensor::new([[2.0, 0.5], [0.5, 1.0]], 1.0).unwrap();
        let [l0, l1] = t.eigenvalues();
        assert!((l0 + l1 - 3.0).abs() < 1e-14 && (l0 * l1 - 1.75).abs() < 1e-14);
    }
}
