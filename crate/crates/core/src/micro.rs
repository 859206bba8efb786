//! Microscopic problem on the perforated domain: the L-scheme iteration and
//! a semismooth Newton reference solver.

use std::sync::{Arc, OnceLock};

use crate::error::{invalid, Error, Result};
use crate::fem::{
    apply_dirichlet, assemble_load, assemble_mass, assemble_stiffness, coefficient_minimum, estimate_poincare,
    h1_seminorm, l2_norm, lumped_mass, DirichletConstraint, FeField, ScalarFn,
};
use crate::mesh::{BoundaryTag, Mesh, PerforationSpec};
use crate::reaction::{GammaSchedule, ReactionSpec};
use crate::sparse::{norm2, solve_spd, solve_spd_from, CsrMatrix, SolverOptions};

/// `A(y) = 1 / (2 + cos(2πy₁) cos(2πy₂))`, one-periodic with values in [1/3, 1].
pub fn oscillatory_coefficient() -> ScalarFn {
    use std::f64::consts::PI;
    ScalarFn::new(|y| 1.0 / (2.0 + (2.0 * PI * y[0]).cos() * (2.0 * PI * y[1]).cos()))
}

#[derive(Debug, Clone)]
pub struct MicroConfig {
    pub alpha: f64,
    pub eta: f64,
    pub reaction: ReactionSpec,
    pub schedule: GammaSchedule,
    pub source: ScalarFn,
    /// Cell coefficient `A(y)`; the problem uses `A(x/ε)`.
    pub coefficient: ScalarFn,
    pub perforation: PerforationSpec,
    pub k_max: usize,
    /// Relative successive-difference tolerance in L².
    pub stop_tol: f64,
    pub solver: SolverOptions,
    /// Estimate the Poincaré constant and fill in the theoretical factors.
    pub diagnostics: bool,
}

impl MicroConfig {
    /// α = 0, η = 0.4, p = 2, δ₀ = δ₁ = 1, f = 1, geometric schedule and
    /// the oscillatory coefficient.
    pub fn standard(perforation: PerforationSpec) -> Self {
        MicroConfig {
            alpha: 0.0,
            eta: 0.4,
            reaction: ReactionSpec::power_law(2.0).expect("p = 2 is valid"),
            schedule: GammaSchedule::Geometric { p: 2.0 },
            source: ScalarFn::constant(1.0),
            coefficient: oscillatory_coefficient(),
            perforation,
            k_max: 30,
            stop_tol: 1e-8,
            solver: SolverOptions::default(),
            diagnostics: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(invalid(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
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

    /// Weight `ε^α` of the reaction term.
    pub fn reaction_scale(&self) -> f64 {
        self.perforation.epsilon().powf(self.alpha)
    }

    /// Stabilization `M = η + ε^α δ₁`.
    pub fn stabilization(&self) -> f64 {
        self.eta + self.reaction_scale() * self.reaction.delta1()
    }
}

/// One L-scheme iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub gamma: f64,
    /// `‖u^k − u^{k−1}‖_{L²}`.
    pub diff_l2: f64,
    /// `‖∇(u^k − u^{k−1})‖_{L²}`.
    pub diff_grad: f64,
    /// Largest nodal difference.
    pub diff_linf: f64,
    /// `diff_l2 / ‖u^k‖_{L²}`.
    pub relative_diff: f64,
    /// `‖w^k‖ / ‖w^{k−1}‖`, reported from k = 3 on.
    pub ratio: Option<f64>,
    pub solver_iterations: usize,
}

/// Constants entering the theoretical contraction factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionTheory {
    /// Ellipticity lower bound of the stiffness operator.
    pub gamma_lower: f64,
    pub poincare: f64,
    pub stabilization: f64,
    /// `b = M / (γ̲ C_p⁻¹ + M)`.
    pub b: f64,
    /// `ω + √b`, when the schedule has a geometric rate.
    pub omega_bar: Option<f64>,
}

impl ContractionTheory {
    pub fn new(gamma_lower: f64, poincare: f64, stabilization: f64, omega: Option<f64>) -> Self {
        let b = stabilization / (gamma_lower / poincare + stabilization);
        ContractionTheory {
            gamma_lower,
            poincare,
            stabilization,
            b,
            omega_bar: omega.map(|w| w + b.sqrt()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LSchemeTrace {
    pub records: Vec<IterationRecord>,
    pub theory: Option<ContractionTheory>,
    pub converged: bool,
}

impl LSchemeTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.ratio).collect()
    }

    /// Geometric mean of the reported ratios.
    pub fn fitted_ratio(&self) -> Option<f64> {
        let r: Vec<f64> = self.ratios().into_iter().filter(|v| *v > 0.0).collect();
        if r.is_empty() {
            return None;
        }
        Some((r.iter().map(|v| v.ln()).sum::<f64>() / r.len() as f64).exp())
    }
}

/// Operators of the microscopic problem, assembled once per mesh and configuration.
#[derive(Debug)]
pub struct MicroProblem {
    mesh: Arc<Mesh>,
    config: MicroConfig,
    stiffness: CsrMatrix,
    constrained_stiffness: CsrMatrix,
    system: CsrMatrix,
    lumped: Vec<f64>,
    load: Vec<f64>,
    constraint: DirichletConstraint,
    theory: OnceLock<ContractionTheory>,
}

impl MicroProblem {
    pub fn new(mesh: Arc<Mesh>, config: MicroConfig) -> Result<Self> {
        config.validate()?;
        let m = config.perforation.cells_per_side() as f64;
        let coef = config.coefficient.clone();
        let scaled = move |x: [f64; 2]| coef.eval([x[0] * m, x[1] * m]);
        let stiffness = assemble_stiffness(&mesh, &scaled)?;
        let mass = assemble_mass(&mesh);
        let source = config.source.clone();
        let load = assemble_load(&mesh, &|x| source.eval(x));
        let mut system = stiffness.add_scaled(config.stabilization(), &mass)?;
        let mut scratch = vec![0.0; mesh.node_count()];
        let constraint = apply_dirichlet(&mut system, &mut scratch, &mesh, BoundaryTag::Exterior, 0.0)?;
        let mut constrained_stiffness = stiffness.clone();
        constraint.apply_matrix(&mut constrained_stiffness);
        let lumped = lumped_mass(&mesh);
        Ok(MicroProblem {
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

    pub fn config(&self) -> &MicroConfig {
        &self.config
    }

    /// Smallest sampled value of `A(x/ε)`.
    pub fn gamma_lower(&self) -> f64 {
        let m = self.config.perforation.cells_per_side() as f64;
        coefficient_minimum(&self.mesh, &|x| self.config.coefficient.eval([x[0] * m, x[1] * m]))
    }

    /// Theoretical contraction constants, with the Poincaré constant of the
    /// perforated mesh (computed on first use).
    pub fn theory(&self) -> Result<ContractionTheory> {
        if let Some(t) = self.theory.get() {
            return Ok(*t);
        }
        let cp = estimate_poincare(&self.mesh, BoundaryTag::Exterior)?.c_p;
        let t = ContractionTheory::new(
            self.gamma_lower(),
            cp,
            self.config.stabilization(),
            self.config.schedule.omega(),
        );
        Ok(*self.theory.get_or_init(|| t))
    }

    fn field(&self, values: Vec<f64>) -> FeField {
        FeField::new(self.mesh.clone(), values).expect("length matches the mesh")
    }

    /// One step `(K + M·Mass) u^k = F + M·Mass u^{k−1} − ε^α R_{γ_k}(u^{k−1})`,
    /// solved for the increment `u^k − u^{k−1}`.
    pub fn step(&self, previous: &FeField, k: usize) -> Result<FeField> {
        Ok(self.step_increment(previous.values(), k)?.0)
    }

    fn step_increment(&self, prev: &[f64], k: usize) -> Result<(FeField, usize)> {
        if prev.len() != self.mesh.node_count() {
            return Err(invalid("previous iterate does not match the mesh"));
        }
        let gamma = self.config.schedule.gamma(k)?;
        let r = self.config.reaction.regularized_map(gamma, prev)?;
        let s = self.config.reaction_scale();
        let ku = self.stiffness.mul_vec(prev);
        let mut rhs: Vec<f64> = (0..prev.len())
            .map(|i| self.load[i] - ku[i] - s * self.lumped[i] * r[i])
            .collect();
        self.constraint.zero_fixed(&mut rhs);
        let sol = solve_spd(&self.system, &rhs, &self.config.solver)?;
        let mut next: Vec<f64> = prev.iter().zip(&sol.x).map(|(a, b)| a + b).collect();
        self.constraint.enforce(&mut next);
        Ok((self.field(next), sol.iterations))
    }

    pub fn run_lscheme(&self) -> Result<(FeField, LSchemeTrace)> {
        self.run_lscheme_with(|_, _| {})
    }

    /// Runs the iteration from `u⁰ = 0`, passing each iterate to `observer`.
    pub fn run_lscheme_with(&self, mut observer: impl FnMut(usize, &FeField)) -> Result<(FeField, LSchemeTrace)> {
        let mut trace = LSchemeTrace::default();
        if self.config.diagnostics {
            trace.theory = Some(self.theory()?);
        }
        let mut u = FeField::zeros(self.mesh.clone());
        let mut last_diff: Option<f64> = None;
        for k in 1..=self.config.k_max {
            let (next, its) = self.step_increment(u.values(), k)?;
            let w: Vec<f64> = next.values().iter().zip(u.values()).map(|(a, b)| a - b).collect();
            let wf = self.field(w);
            let diff_l2 = l2_norm(&wf);
            let norm = l2_norm(&next);
            let relative_diff = if norm > 0.0 { diff_l2 / norm } else { 0.0 };
            let ratio = match last_diff {
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
            last_diff = Some(diff_l2);
            observer(k, &next);
            u = next;
            if relative_diff < self.config.stop_tol {
                trace.converged = true;
                break;
            }
        }
        Ok((u, trace))
    }

    /// Solution of the problem without reaction, `K u = F`.
    pub fn solve_linear(&self) -> Result<FeField> {
        let mut rhs = self.load.clone();
        self.constraint.apply_rhs(&mut rhs);
        let mut x = solve_spd(&self.constrained_stiffness, &rhs, &self.config.solver)?.x;
        self.constraint.enforce(&mut x);
        Ok(self.field(x))
    }

    fn residual(&self, u: &[f64]) -> Vec<f64> {
        let s = self.config.reaction_scale();
        let ku = self.stiffness.mul_vec(u);
        let mut r: Vec<f64> = (0..u.len())
            .map(|i| ku[i] + s * self.lumped[i] * self.config.reaction.value(u[i]) - self.load[i])
            .collect();
        self.constraint.zero_fixed(&mut r);
        r
    }

    /// Semismooth Newton for `K u + ε^α B(u) = F` starting from the linear
    /// solution, with backtracking on the residual norm. Converged when the
    /// residual drops below `tol` relative to the load.
    pub fn solve_newton(&self, tol: f64, max_newton: usize) -> Result<NewtonSolution> {
        let mut scaled_load = self.load.clone();
        self.constraint.zero_fixed(&mut scaled_load);
        let load_norm = norm2(&scaled_load);
        if load_norm == 0.0 {
            return Ok(NewtonSolution {
                field: FeField::zeros(self.mesh.clone()),
                iterations: 1,
                residual: 0.0,
            });
        }
        let s = self.config.reaction_scale();
        let inner = SolverOptions {
            tol: (tol * 0.1).min(1e-11),
            max_iter: self.config.solver.max_iter,
        };
        let mut u = self.solve_linear()?.into_values();
        let mut r = self.residual(&u);
        let mut rnorm = norm2(&r) / load_norm;
        for it in 1..=max_newton {
            if rnorm < tol {
                return Ok(NewtonSolution {
                    field: self.field(u),
                    iterations: it - 1,
                    residual: rnorm,
                });
            }
            let mut jac = self.constrained_stiffness.clone();
            for i in 0..u.len() {
                if !self.constraint.is_fixed(i) {
                    jac.add(i, i, s * self.lumped[i] * self.config.reaction.derivative(u[i]));
                }
            }
            let neg: Vec<f64> = r.iter().map(|v| -v).collect();
            let du = solve_spd_from(&jac, &neg, None, &inner)?.x;
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..=MAX_HALVINGS {
                let trial: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + step * b).collect();
                let tr = self.residual(&trial);
                let tn = norm2(&tr) / load_norm;
                if tn < rnorm || tn < tol {
                    u = trial;
                    r = tr;
                    rnorm = tn;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                return Err(Error::NonConvergence {
                    solver: "newton line search",
                    iterations: it,
                    residual: rnorm,
                });
            }
        }
        if rnorm < tol {
            return Ok(NewtonSolution {
                field: self.field(u),
                iterations: max_newton,
                residual: rnorm,
            });
        }
        Err(Error::NonConvergence {
            solver: "newton",
            iterations: max_newton,
            residual: rnorm,
        })
    }
}

const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone)]
pub struct NewtonSolution {
    pub field: FeField,
    pub iterations: usize,
    /// Final residual relative to the load norm.
    pub residual: f64,
}

/// `B_k = a_k + Σ_{j=2}^{k−1} a_j Π_{i=j+1}^k b_i + q₁ Π_{i=2}^k b_i`, with
/// sequences indexed by `k` (entries 0 and 1 of `a`, and 0 and 1 of `b`,
/// are not used). The output has `B_0 = 0` and `B_1 = q₁`.
pub fn recursion_bound(a: &[f64], b: &[f64], q1: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(invalid("recursion sequences must have equal length"));
    }
    if a.iter().chain(b).any(|v| !(*v >= 0.0)) || !(q1 >= 0.0) {
        return Err(invalid("recursion inputs must be nonnegative"));
    }
    let n = a.len();
    let mut out = vec![0.0; n];
    if n > 1 {
        out[1] = q1;
    }
    for k in 2..n {
        let tail = |j: usize| (j + 1..=k).map(|i| b[i]).product::<f64>();
        let mut s = a[k];
        for j in 2..k {
            s += a[j] * tail(j);
        }
        s += q1 * tail(1);
        out[k] = s;
    }
    Ok(out)
}

/// Measured quantity bounded by the recursion:
/// `γ̲/(η + δ₁ + γ̲ C_p⁻¹) ‖∇w^k‖² + ‖w^k‖²`.
pub fn recursion_measure(trace: &LSchemeTrace, theory: &ContractionTheory, eta: f64, delta1: f64) -> Vec<f64> {
    let weight = theory.gamma_lower / (eta + delta1 + theory.gamma_lower / theory.poincare);
    trace
        .records
        .iter()
        .map(|r| weight * r.diff_grad * r.diff_grad + r.diff_l2 * r.diff_l2)
        .collect()
}

/// Comparison of a measured trace with the recursion bound.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionComparison {
    /// Smallest constant `C` in `a_k = C γ_{k−1}^{2σ} / γ_k` for which the
    /// bound dominates every measured value.
    pub constant: f64,
    /// Measured values indexed by `k` (entry 0 unused).
    pub measured: Vec<f64>,
    /// Bound values indexed by `k`.
    pub bound: Vec<f64>,
}

/// Fits the constant of the recursion bound to a trace, with `q₁` the
/// measured value at `k = 1` and `b_k = b` from the theory.
pub fn fit_recursion(trace: &LSchemeTrace, config: &MicroConfig) -> Result<RecursionComparison> {
    let theory = trace.theory.ok_or_else(|| invalid("trace has no contraction theory"))?;
    let mut measured = vec![0.0];
    measured.extend(recursion_measure(trace, &theory, config.eta, config.reaction.delta1()));
    let n = measured.len();
    let sigma = config.reaction.sigma();
    let mut shape = vec![0.0; n];
    for (k, s) in shape.iter_mut().enumerate().skip(2) {
        let g1 = config.schedule.gamma(k - 1)?;
        *s = g1.powf(2.0 * sigma) / config.schedule.gamma(k)?;
    }
    let b = vec![theory.b; n];
    let q1 = if n > 1 { measured[1] } else { 0.0 };
    let unit = recursion_bound(&shape, &b, 0.0)?;
    let base = recursion_bound(&vec![0.0; n], &b, q1)?;
    let mut constant: f64 = 0.0;
    for k in 2..n {
        if unit[k] > 0.0 {
            constant = constant.max((measured[k] - base[k]) / unit[k]);
        }
    }
    let a: Vec<f64> = shape.iter().map(|s| s * constant).collect();
    let bound = recursion_bound(&a, &b, q1)?;
    Ok(RecursionComparison {
        constant,
        measured,
        bound,
    })
}
