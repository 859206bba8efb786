//! Error metrics and the numerical experiments comparing microscopic and
//! homogenized solutions.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::fem::{map_point, FeField, ScalarFn, INTERIOR_RULE};
use crate::homogenize::{compute_homogenized, AlphaCase, HomogenizedTensor, MacroConfig, MacroProblem};
use crate::mesh::{generate_perforated, generate_square, PerforationSpec};
use crate::micro::{
    fit_recursion, oscillatory_coefficient, LSchemeTrace, MicroConfig, MicroProblem, RecursionComparison,
};
use crate::reaction::{GammaSchedule, ReactionSpec};
use crate::sparse::SolverOptions;

/// Slope of the least-squares line through `(x, y)` points.
pub fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Fits `y = c x^s` by least squares in log-log space; returns `(s, c)`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(invalid("power-law fit needs at least two matching points"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(invalid("power-law fit needs positive data"));
    }
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x.ln(), y.ln())).collect();
    let s = least_squares_slope(&pts);
    let n = pts.len() as f64;
    let c = ((pts.iter().map(|p| p.1).sum::<f64>() - s * pts.iter().map(|p| p.0).sum::<f64>()) / n).exp();
    Ok((s, c))
}

/// `‖u − v‖_{L²}` over `u`'s mesh, with `v` evaluated at `u`'s quadrature points.
pub fn error_e1(u: &FeField, v: &FeField) -> Result<f64> {
    let mesh = u.mesh();
    let same = Arc::ptr_eq(mesh, v.mesh());
    let mut s = 0.0;
    for t in 0..mesh.triangle_count() {
        let w = mesh.triangle_area(t) / 3.0;
        let verts = mesh.vertices(t);
        for lam in &INTERIOR_RULE {
            let vu = u.value_in(t, lam);
            let vv = if same {
                v.value_in(t, lam)
            } else {
                v.evaluate(map_point(&verts, lam))?
            };
            s += w * (vu - vv) * (vu - vv);
        }
    }
    Ok(s.sqrt())
}

/// `E1(u, v) / ‖u‖`.
pub fn error_e2(u: &FeField, v: &FeField) -> Result<f64> {
    let e = error_e1(u, v)?;
    Ok(e / crate::fem::l2_norm(u))
}

/// `‖∇u − ∇v‖_{L²}` over `u`'s mesh, with piecewise-constant gradients of
/// each field taken on its own mesh.
pub fn error_e1_grad(u: &FeField, v: &FeField) -> Result<f64> {
    let mesh = u.mesh();
    let same = Arc::ptr_eq(mesh, v.mesh());
    let mut s = 0.0;
    for t in 0..mesh.triangle_count() {
        let w = mesh.triangle_area(t) / 3.0;
        let gu = u.gradient_in(t);
        let verts = mesh.vertices(t);
        for lam in &INTERIOR_RULE {
            let gv = if same {
                v.gradient_in(t)
            } else {
                v.gradient(map_point(&verts, lam))?
            };
            s += w * ((gu[0] - gv[0]).powi(2) + (gu[1] - gv[1]).powi(2));
        }
    }
    Ok(s.sqrt())
}

/// `E1` of the gradients divided by `‖∇u‖`.
pub fn error_e2_grad(u: &FeField, v: &FeField) -> Result<f64> {
    let e = error_e1_grad(u, v)?;
    Ok(e / crate::fem::h1_seminorm(u))
}

/// Formats `x` with six significant digits, in fixed or exponent notation
/// depending on magnitude.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.5e}");
        let (mant, e) = s.split_once('e').expect("exponent form");
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{mant}e{e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub epsilon: f64,
    pub k: usize,
    pub values: Vec<f64>,
}

/// Table of error values keyed by `(ε, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl ErrorReport {
    pub fn new(columns: &[&str]) -> Self {
        ErrorReport {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, epsilon: f64, k: usize, values: Vec<f64>) {
        assert_eq!(values.len(), self.columns.len(), "row width must match the columns");
        self.rows.push(ReportRow { epsilon, k, values });
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r.values[c]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,k");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{},{}", format_sig(r.epsilon), r.k);
            for v in &r.values {
                let _ = write!(s, ",{}", format_sig(*v));
            }
            s.push('\n');
        }
        s
    }
}

/// Shared parameters of the experiments.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub hole_radius: f64,
    /// Grid intervals per cell side of the perforated meshes.
    pub n_per_cell: usize,
    /// Grid intervals of the cell-problem mesh.
    pub cell_n: usize,
    /// Grid intervals of the macroscopic square mesh.
    pub macro_n: usize,
    pub alpha: f64,
    pub eta: f64,
    pub reaction: ReactionSpec,
    pub schedule: GammaSchedule,
    pub source: ScalarFn,
    pub coefficient: ScalarFn,
    pub k_max: usize,
    pub stop_tol: f64,
    pub solver: SolverOptions,
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for ExperimentSetup {
    fn default() -> Self {
        ExperimentSetup {
            hole_radius: 0.4,
            n_per_cell: 32,
            cell_n: 128,
            macro_n: 128,
            alpha: 0.0,
            eta: 0.4,
            reaction: ReactionSpec::power_law(2.0).expect("p = 2 is valid"),
            schedule: GammaSchedule::Geometric { p: 2.0 },
            source: ScalarFn::constant(1.0),
            coefficient: oscillatory_coefficient(),
            k_max: 30,
            stop_tol: 1e-8,
            solver: SolverOptions::default(),
            newton_tol: 1e-10,
            max_newton: 30,
        }
    }
}

impl ExperimentSetup {
    pub fn perforation(&self, epsilon: f64) -> Result<PerforationSpec> {
        PerforationSpec::new(epsilon, self.hole_radius)
    }

    pub fn micro_config(&self, perforation: PerforationSpec) -> MicroConfig {
        MicroConfig {
            alpha: self.alpha,
            eta: self.eta,
            reaction: self.reaction,
            schedule: self.schedule,
            source: self.source.clone(),
            coefficient: self.coefficient.clone(),
            perforation,
            k_max: self.k_max,
            stop_tol: self.stop_tol,
            solver: self.solver,
            diagnostics: false,
        }
    }

    pub fn micro_problem(&self, perforation: PerforationSpec) -> Result<MicroProblem> {
        let mesh = Arc::new(generate_perforated(self.n_per_cell, &perforation)?);
        MicroProblem::new(mesh, self.micro_config(perforation))
    }

    pub fn homogenized_tensor(&self) -> Result<HomogenizedTensor> {
        Ok(compute_homogenized(self.cell_n, self.hole_radius, &self.coefficient)?.1)
    }

    pub fn macro_config(&self, tensor: HomogenizedTensor) -> MacroConfig {
        MacroConfig {
            alpha_case: AlphaCase::from_alpha(self.alpha),
            eta: self.eta,
            reaction: self.reaction,
            schedule: self.schedule,
            source: self.source.clone(),
            k_max: self.k_max,
            stop_tol: self.stop_tol,
            solver: self.solver,
            tensor,
            diagnostics: false,
        }
    }

    pub fn macro_problem(&self, tensor: HomogenizedTensor) -> Result<MacroProblem> {
        let mesh = Arc::new(generate_square(self.macro_n)?);
        MacroProblem::new(mesh, self.macro_config(tensor))
    }
}

type Observer<'a> = &'a mut dyn FnMut(usize, &FeField);

/// Iterates `k ∈ ks` of an L-scheme run, plus the final iterate. A run that
/// stopped before some `k` has reached its fixed point, so the final iterate
/// stands in for the missing ones.
fn capture(
    ks: &[usize],
    run: impl FnOnce(Observer<'_>) -> Result<(FeField, LSchemeTrace)>,
) -> Result<(Vec<FeField>, FeField, LSchemeTrace)> {
    let mut got: Vec<Option<FeField>> = vec![None; ks.len()];
    let (last, trace) = run(&mut |k, u| {
        if let Some(i) = ks.iter().position(|&q| q == k) {
            got[i] = Some(u.clone());
        }
    })?;
    let out = got.into_iter().map(|g| g.unwrap_or_else(|| last.clone())).collect();
    Ok((out, last, trace))
}

fn micro_iterates(p: &MicroProblem, ks: &[usize]) -> Result<(Vec<FeField>, FeField, LSchemeTrace)> {
    capture(ks, |obs| p.run_lscheme_with(|k, u| obs(k, u)))
}

fn macro_iterates(p: &MacroProblem, ks: &[usize]) -> Result<(Vec<FeField>, FeField, LSchemeTrace)> {
    capture(ks, |obs| p.run_lscheme_with(|k, u| obs(k, u)))
}

pub const TABLE1_COLUMNS: [&str; 6] = ["max_h", "E1", "E1_grad", "E2", "E2_grad", "newton_iterations"];

/// Microscopic Newton solution against the k-th macroscopic L-scheme
/// iterate, one row per `ε`.
pub fn run_table1(setup: &ExperimentSetup, epsilons: &[f64], k: usize) -> Result<ErrorReport> {
    let tensor = setup.homogenized_tensor()?;
    let macro_p = setup.macro_problem(tensor)?;
    let (iter, _, _) = macro_iterates(&macro_p, &[k])?;
    let u0 = &iter[0];
    let mut report = ErrorReport::new(&TABLE1_COLUMNS);
    for &eps in epsilons {
        let p = setup.micro_problem(setup.perforation(eps)?)?;
        let newton = p.solve_newton(setup.newton_tol, setup.max_newton)?;
        let ue = &newton.field;
        let e1 = error_e1(ue, u0)?;
        let g1 = error_e1_grad(ue, u0)?;
        report.push(
            eps,
            k,
            vec![
                p.mesh().max_h(),
                e1,
                g1,
                e1 / crate::fem::l2_norm(ue),
                g1 / crate::fem::h1_seminorm(ue),
                newton.iterations as f64,
            ],
        );
    }
    Ok(report)
}

pub const TABLE2_COLUMNS: [&str; 4] = ["E2_micro_macro", "E2_newton_lscheme", "E2_grad_newton_lscheme", "max_h"];

/// L-scheme iterates `u_ε^k` against the Newton solution and against the
/// macroscopic iterates `u_0^k`.
pub fn run_table2(setup: &ExperimentSetup, epsilon: f64, ks: &[usize]) -> Result<ErrorReport> {
    let tensor = setup.homogenized_tensor()?;
    let macro_p = setup.macro_problem(tensor)?;
    let (macro_k, _, _) = macro_iterates(&macro_p, ks)?;
    let p = setup.micro_problem(setup.perforation(epsilon)?)?;
    let newton = p.solve_newton(setup.newton_tol, setup.max_newton)?;
    let (micro_k, _, _) = micro_iterates(&p, ks)?;
    let mut report = ErrorReport::new(&TABLE2_COLUMNS);
    for (i, &k) in ks.iter().enumerate() {
        report.push(
            epsilon,
            k,
            vec![
                error_e2(&micro_k[i], &macro_k[i])?,
                error_e2(&newton.field, &micro_k[i])?,
                error_e2_grad(&newton.field, &micro_k[i])?,
                p.mesh().max_h(),
            ],
        );
    }
    Ok(report)
}

/// Fitted rates of `‖u_ε − u_0‖` in ε.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorRate {
    pub report: ErrorReport,
    pub l2_slope: f64,
    pub h1_slope: f64,
}

pub const CORRECTOR_COLUMNS: [&str; 4] = ["max_h", "E1", "E1_grad", "E2"];

/// Newton micro solutions against the converged macroscopic solution,
/// fitted on a log-log scale.
pub fn run_corrector_rate(setup: &ExperimentSetup, epsilons: &[f64]) -> Result<CorrectorRate> {
    let tensor = setup.homogenized_tensor()?;
    let macro_p = setup.macro_problem(tensor)?;
    let (u0, trace) = macro_p.run_lscheme()?;
    let k = trace.iterations();
    let mut report = ErrorReport::new(&CORRECTOR_COLUMNS);
    for &eps in epsilons {
        let p = setup.micro_problem(setup.perforation(eps)?)?;
        let ue = p.solve_newton(setup.newton_tol, setup.max_newton)?.field;
        let e1 = error_e1(&ue, &u0)?;
        report.push(
            eps,
            k,
            vec![
                p.mesh().max_h(),
                e1,
                error_e1_grad(&ue, &u0)?,
                e1 / crate::fem::l2_norm(&ue),
            ],
        );
    }
    let eps: Vec<f64> = report.rows.iter().map(|r| r.epsilon).collect();
    let (l2_slope, _) = fit_power_law(&eps, &report.column("E1").expect("column exists"))?;
    let (h1_slope, _) = fit_power_law(&eps, &report.column("E1_grad").expect("column exists"))?;
    Ok(CorrectorRate {
        report,
        l2_slope,
        h1_slope,
    })
}

/// Contraction diagnostics of one microscopic run and of the α > 0
/// macroscopic iteration.
#[derive(Debug, Clone)]
pub struct ContractionReport {
    pub micro: LSchemeTrace,
    pub micro_fitted_ratio: Option<f64>,
    pub recursion: RecursionComparison,
    pub macro_positive: LSchemeTrace,
    /// Analytic `η|Y|/(|A⁰| c_p⁻¹ + η|Y|)`.
    pub macro_factor: f64,
}

impl ContractionReport {
    /// Per-iteration CSV of the microscopic trace.
    pub fn micro_csv(&self) -> String {
        let mut s =
            String::from("k,gamma,diff_l2,diff_grad,diff_linf,relative_diff,ratio,recursion_measure,recursion_bound\n");
        for r in &self.micro.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.k,
                format_sig(r.gamma),
                format_sig(r.diff_l2),
                format_sig(r.diff_grad),
                format_sig(r.diff_linf),
                format_sig(r.relative_diff),
                r.ratio.map(format_sig).unwrap_or_default(),
                self.recursion
                    .measured
                    .get(r.k)
                    .copied()
                    .map(format_sig)
                    .unwrap_or_default(),
                self.recursion
                    .bound
                    .get(r.k)
                    .copied()
                    .map(format_sig)
                    .unwrap_or_default(),
            );
        }
        s
    }

    pub fn macro_csv(&self) -> String {
        let mut s = String::from("k,diff_l2,ratio,analytic_factor\n");
        for r in &self.macro_positive.records {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.k,
                format_sig(r.diff_l2),
                r.ratio.map(format_sig).unwrap_or_default(),
                format_sig(self.macro_factor)
            );
        }
        s
    }
}

pub fn run_contraction_report(setup: &ExperimentSetup, epsilon: f64) -> Result<ContractionReport> {
    let p = setup.micro_problem(setup.perforation(epsilon)?)?;
    let mut cfg = p.config().clone();
    cfg.diagnostics = true;
    let p = MicroProblem::new(p.mesh().clone(), cfg.clone())?;
    let (_, micro) = p.run_lscheme()?;
    let recursion = fit_recursion(&micro, &cfg)?;

    let tensor = setup.homogenized_tensor()?;
    let mut mcfg = setup.macro_config(tensor);
    mcfg.alpha_case = AlphaCase::Positive;
    mcfg.diagnostics = true;
    let mp = MacroProblem::new(Arc::new(generate_square(setup.macro_n)?), mcfg)?;
    let (_, macro_positive) = mp.run_lscheme()?;
    let macro_factor = mp.theory()?.b;
    Ok(ContractionReport {
        micro_fitted_ratio: micro.fitted_ratio(),
        micro,
        recursion,
        macro_positive,
        macro_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_square;
    use proptest::prelude::*;

    #[test]
    fn e1_closed_forms() {
        let mesh = Arc::new(generate_square(8).unwrap());
        let x = FeField::interpolate(mesh.clone(), &|p| p[0]);
        let x2 = FeField::interpolate(mesh.clone(), &|p| 2.0 * p[0]);
        let zero = FeField::zeros(mesh.clone());
        assert_eq!(error_e1(&x, &x).unwrap(), 0.0);
        assert!((error_e1(&x, &x2).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((error_e2(&x, &x2).unwrap() - 1.0).abs() < 1e-12);
        assert!((error_e2(&x, &zero).unwrap() - 1.0).abs() < 1e-12);
        assert!((error_e1_grad(&x, &x2).unwrap() - 1.0).abs() < 1e-12);

        // Same functions on a different mesh give the same values.
        let other = Arc::new(generate_square(5).unwrap());
        let x2o = FeField::interpolate(other, &|p| 2.0 * p[0]);
        assert!((error_e1(&x, &x2o).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((error_e1_grad(&x, &x2o).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn formatting() {
        assert_eq!(format_sig(0.139640123), "0.13964");
        assert_eq!(format_sig(0.00027), "0.00027");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(1234567.0), "1.23457e6");
        assert_eq!(format_sig(1.89291e-8), "1.89291e-8");
        assert_eq!(format_sig(-0.192688449), "-0.192688");
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(30.0), "30");
    }

    #[test]
    fn report_csv() {
        let mut r = ErrorReport::new(&["a", "b"]);
        r.push(0.25, 2, vec![0.5, 1e-9]);
        assert_eq!(r.to_csv(), "epsilon,k,a,b\n0.25,2,0.5,1e-9\n");
        assert_eq!(r.column("b").unwrap(), vec![1e-9]);
        assert!(r.column("c").is_none());
    }

    #[test]
    fn power_law_fit_exact() {
        let eps = [0.5, 0.25, 0.1, 0.05];
        let ys: Vec<f64> = eps.iter().map(|e: &f64| 0.3 * e.sqrt()).collect();
        let (s, c) = fit_power_law(&eps, &ys).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
        assert!((c - 0.3).abs() < 1e-12);
        assert!(fit_power_law(&[1.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn power_law_fit_recovers(s in -3.0..3.0f64, c in 0.01..10.0f64) {
            let xs = [0.5, 0.25, 0.125, 0.1];
            let ys: Vec<f64> = xs.iter().map(|x: &f64| c * x.powf(s)).collect();
            let (fs, fc) = fit_power_law(&xs, &ys).unwrap();
            prop_assert!((fs - s).abs() < 1e-10);
            prop_assert!((fc / c - 1.0).abs() < 1e-10);
        }
    }
}
