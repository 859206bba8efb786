use std::f64::consts::PI;
use std::sync::Arc;

use lscheme_core::fem::*;
use lscheme_core::mesh::*;
use lscheme_core::sparse::{solve_spd, SolverOptions};

fn solve_poisson(n: usize, f: &dyn Fn(Point) -> f64) -> FeField {
    let mesh = Arc::new(generate_square(n).unwrap());
    let mut k = assemble_stiffness(&mesh, &|_| 1.0).unwrap();
    let mut b = assemble_load(&mesh, f);
    let c = apply_dirichlet(&mut k, &mut b, &mesh, BoundaryTag::Exterior, 0.0).unwrap();
    let mut x = solve_spd(&k, &b, &SolverOptions::with_tol(1e-12)).unwrap().x;
    c.enforce(&mut x);
    FeField::new(mesh, x).unwrap()
}

/// L² and H¹-seminorm errors against an exact solution, by quadrature.
fn exact_errors(u: &FeField, exact: &dyn Fn(Point) -> f64, grad: &dyn Fn(Point) -> [f64; 2]) -> (f64, f64) {
    let mesh = u.mesh();
    let (mut l2, mut h1) = (0.0, 0.0);
    for t in 0..mesh.triangle_count() {
        let v = mesh.vertices(t);
        let w = mesh.triangle_area(t) / 3.0;
        let g = u.gradient_in(t);
        for lam in &INTERIOR_RULE {
            let p = [
                lam[0] * v[0][0] + lam[1] * v[1][0] + lam[2] * v[2][0],
                lam[0] * v[0][1] + lam[1] * v[1][1] + lam[2] * v[2][1],
            ];
            l2 += w * (u.value_in(t, lam) - exact(p)).powi(2);
            let ge = grad(p);
            h1 += w * ((g[0] - ge[0]).powi(2) + (g[1] - ge[1]).powi(2));
        }
    }
    (l2.sqrt(), h1.sqrt())
}

#[test]
fn manufactured_solution_orders() {
    let exact = |p: Point| (PI * p[0]).sin() * (PI * p[1]).sin();
    let grad = |p: Point| {
        [
            PI * (PI * p[0]).cos() * (PI * p[1]).sin(),
            PI * (PI * p[0]).sin() * (PI * p[1]).cos(),
        ]
    };
    let f = |p: Point| 2.0 * PI * PI * exact(p);
    let errs: Vec<(f64, f64)> = [8, 16, 32, 64]
        .iter()
        .map(|&n| exact_errors(&solve_poisson(n, &f), &exact, &grad))
        .collect();
    for w in errs.windows(2) {
        let l2_order = (w[0].0 / w[1].0).log2();
        let h1_order = (w[0].1 / w[1].1).log2();
        assert!(l2_order >= 1.8, "L2 order {l2_order}");
        assert!(h1_order >= 0.9, "H1 order {h1_order}");
    }
}

#[test]
fn poisson_center_value_matches_fourier_series() {
    // u(1/2,1/2) = Σ_{m,n odd} 16 sin(mπ/2) sin(nπ/2) / (π⁴ m n (m² + n²)).
    let mut oracle = 0.0;
    for m in (1..4000).step_by(2) {
        for n in (1..4000).step_by(2) {
            let sign = if ((m + n) / 2) % 2 == 1 { 1.0 } else { -1.0 };
            let (m, n) = (m as f64, n as f64);
            oracle += sign * 16.0 / (PI.powi(4) * m * n * (m * m + n * n));
        }
    }
    assert!((oracle - 0.07367).abs() < 5e-5, "oracle {oracle}");
    let u = solve_poisson(32, &|_| 1.0);
    let center = u.evaluate([0.5, 0.5]).unwrap();
    assert!((center - oracle).abs() < 2e-3, "{center} vs {oracle}");
    let max = u.values().iter().cloned().fold(f64::MIN, f64::max);
    assert_eq!(max, center);
}

#[test]
fn constraining_every_node_fixes_the_solution() {
    let mesh = generate_square(1).unwrap();
    let mut k = assemble_stiffness(&mesh, &|_| 1.0).unwrap();
    let mut b = assemble_load(&mesh, &|_| 5.0);
    apply_dirichlet(&mut k, &mut b, &mesh, BoundaryTag::Exterior, 0.7).unwrap();
    let x = solve_spd(&k, &b, &SolverOptions::default()).unwrap().x;
    assert!(x.iter().all(|&v| (v - 0.7).abs() < 1e-14));
}

#[test]
fn poincare_estimates() {
    let exact = 1.0 / (2.0 * PI * PI);
    let c64 = estimate_poincare(&generate_square(64).unwrap(), BoundaryTag::Exterior)
        .unwrap()
        .c_p;
    let c128 = estimate_poincare(&generate_square(128).unwrap(), BoundaryTag::Exterior)
        .unwrap()
        .c_p;
    assert!(((c64 - exact) / exact).abs() < 0.02);
    assert!(((c64 - c128) / c128).abs() < 0.02);

    // Holes carry the natural condition, so removing material raises c_p.
    // The homogenized operator a⁰Δ with mass |Y| predicts c_p ≈ |Y| / (a⁰ 2π²).
    let perf = generate_perforated(16, &PerforationSpec::new(0.25, 0.4).unwrap()).unwrap();
    let cp = estimate_poincare(&perf, BoundaryTag::Exterior).unwrap().c_p;
    let (_, t) = lscheme_core::homogenize::compute_homogenized(64, 0.4, &ScalarFn::constant(1.0)).unwrap();
    let predicted = t.porosity / (t.a0[0][0] * 2.0 * PI * PI);
    assert!(cp > c64);
    assert!(((cp - predicted) / predicted).abs() < 0.15, "{cp} vs {predicted}");
}

#[test]
fn constant_coefficient_cell_has_zero_corrector() {
    let mesh = generate_cell(16, 0.3).unwrap();
    let k = assemble_stiffness(&mesh, &|_| 1.0).unwrap();
    let square = generate_cell(16, 0.0).unwrap();
    for dir in 0..2 {
        let rhs: Vec<f64> = assemble_flux_load(&square, &|_| 1.0, dir).unwrap();
        let ks = assemble_stiffness(&square, &|_| 1.0).unwrap();
        let x = apply_periodic_and_mean(&ks, &rhs, &square)
            .unwrap()
            .solve(&SolverOptions::default())
            .unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-12));
    }
    // With a hole, the flux is no longer divergence free.
    let rhs = assemble_flux_load(&mesh, &|_| 1.0, 0).unwrap();
    let x = apply_periodic_and_mean(&k, &rhs, &mesh)
        .unwrap()
        .solve(&SolverOptions::default())
        .unwrap();
    assert!(x.iter().any(|v| v.abs() > 1e-3));
}

#[test]
fn shared_edge_points_are_consistent() {
    let mesh = Arc::new(generate_perforated(8, &PerforationSpec::new(0.5, 0.3).unwrap()).unwrap());
    let f = FeField::interpolate(mesh.clone(), &|p| (4.0 * p[0]).sin() + p[1] * p[1]);
    for (a, b) in mesh
        .edge_incidence()
        .into_iter()
        .filter(|&(_, c)| c == 2)
        .map(|(e, _)| e)
    {
        let (pa, pb) = (mesh.nodes()[a], mesh.nodes()[b]);
        let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
        let expected = 0.5 * (f.values()[a] + f.values()[b]);
        assert!((f.evaluate(mid).unwrap() - expected).abs() < 1e-12);
    }
}
