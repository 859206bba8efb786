use std::sync::Arc;

use lscheme_core::experiments::{run_contraction_report, ExperimentSetup};
use lscheme_core::fem::{l2_norm, FeField, ScalarFn};
use lscheme_core::homogenize::{linf_stability, AlphaCase, HomogenizedTensor, MacroConfig, MacroProblem};
use lscheme_core::mesh::{generate_square, BoundaryTag};
use lscheme_core::reaction::GammaSchedule;

fn relative(a: &FeField, b: &FeField) -> f64 {
    let d: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    l2_norm(&FeField::new(a.mesh().clone(), d).unwrap()) / l2_norm(b)
}

fn setup() -> ExperimentSetup {
    ExperimentSetup {
        n_per_cell: 16,
        cell_n: 64,
        macro_n: 64,
        ..ExperimentSetup::default()
    }
}

#[test]
fn contraction_ratio_is_uniform_in_epsilon() {
    let s = setup();
    let ratios: Vec<f64> = [0.5, 0.25, 0.1]
        .iter()
        .map(|&e| {
            let (_, trace) = s
                .micro_problem(s.perforation(e).unwrap())
                .unwrap()
                .run_lscheme()
                .unwrap();
            assert!(trace.converged);
            assert!(trace.ratios().iter().all(|&r| r < 1.0));
            trace.fitted_ratio().unwrap()
        })
        .collect();
    let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
    let hi = ratios.iter().cloned().fold(f64::MIN, f64::max);
    assert!((hi - lo) / lo < 0.2, "{ratios:?}");
}

#[test]
fn newton_and_lscheme_agree() {
    let s = setup();
    for e in [0.5, 0.25, 0.1] {
        let p = s.micro_problem(s.perforation(e).unwrap()).unwrap();
        let newton = p.solve_newton(1e-10, 30).unwrap();
        let (u, _) = p.run_lscheme().unwrap();
        assert!(relative(&u, &newton.field) < 5e-3);
    }
}

#[test]
fn contraction_report_diagnostics() {
    let report = run_contraction_report(&setup(), 0.25).unwrap();
    let theory = report.micro.theory.unwrap();
    assert!((theory.gamma_lower - 1.0 / 3.0).abs() < 0.01);
    assert!(theory.b > 0.0 && theory.b < 1.0);
    assert!((theory.omega_bar.unwrap() - (0.5 + theory.b.sqrt())).abs() < 1e-15);
    let ratio = report.micro_fitted_ratio.unwrap();
    assert!((ratio - 0.12).abs() < 0.05, "{ratio}");
    for k in 1..report.recursion.measured.len() {
        assert!(report.recursion.measured[k] <= report.recursion.bound[k] * (1.0 + 1e-12));
    }
    let last = report.macro_positive.ratios().last().copied().unwrap();
    assert!(((last - report.macro_factor) / report.macro_factor).abs() < 0.05);
    assert!(report.micro_csv().lines().count() == report.micro.records.len() + 1);
}

fn macro_run(schedule: GammaSchedule, source: f64, k_max: usize) -> lscheme_core::micro::LSchemeTrace {
    let tensor = HomogenizedTensor::new([[0.19, 0.0], [0.0, 0.19]], 0.5).unwrap();
    let cfg = MacroConfig {
        alpha_case: AlphaCase::Zero,
        schedule,
        source: ScalarFn::constant(source),
        k_max,
        stop_tol: 1e-300,
        diagnostics: false,
        ..MacroConfig::standard(tensor)
    };
    let p = MacroProblem::new(Arc::new(generate_square(48).unwrap()), cfg).unwrap();
    let (u, trace) = p.run_lscheme().unwrap();
    for i in p.mesh().tagged_nodes(BoundaryTag::Exterior) {
        assert_eq!(u.values()[i], 0.0);
    }
    trace
}

#[test]
fn linf_decay_harmonic_versus_geometric() {
    let harmonic = macro_run(GammaSchedule::harmonic(1.0).unwrap(), 1.0, 20);
    let h = linf_stability(&harmonic, 2, 20).unwrap();
    assert!(h.exponent >= 0.7, "{}", h.exponent);

    let geometric = macro_run(GammaSchedule::geometric(2.0).unwrap(), 1.0, 12);
    let d: Vec<f64> = geometric.records.iter().map(|r| r.diff_linf).collect();
    // Geometric decay outpaces the harmonic polynomial decay.
    assert!(d[11] < harmonic.records[11].diff_linf * 1e-3);
    for w in d[2..].windows(2) {
        assert!(w[1] < 0.5 * w[0]);
    }
}

#[test]
fn linf_zero_source() {
    let trace = macro_run(GammaSchedule::harmonic(1.0).unwrap(), 0.0, 5);
    assert!(trace.records.iter().all(|r| r.diff_linf == 0.0));
}
