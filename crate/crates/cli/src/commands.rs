//! One function per subcommand. Each returns the files it wrote.

use std::fmt::Write as _;
use std::path::PathBuf;

use lscheme_core::experiments::{format_sig, run_contraction_report, run_corrector_rate, run_table1, run_table2};
use lscheme_core::homogenize::{compute_homogenized, HomogenizedTensor};
use lscheme_core::micro::LSchemeTrace;
use lscheme_core::Error;

use crate::config::{ConfigError, RunConfig};
use crate::output::{write_field, write_file};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{stage}: {source}")]
    Invalid { stage: &'static str, source: Error },
    #[error("{stage} failed: {source}")]
    Numerical { stage: &'static str, source: Error },
    #[error("{stage} did not reach stop_tol within k_max = {k_max} iterations")]
    NotConverged { stage: &'static str, k_max: usize },
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Invalid { .. } => 2,
            _ => 1,
        }
    }
}

/// Attaches the failing stage; argument errors count as configuration errors.
fn stage<T>(name: &'static str, r: lscheme_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| match e {
        Error::InvalidArgument(_) | Error::RefinementTooCoarse { .. } => CliError::Invalid { stage: name, source: e },
        _ => CliError::Numerical { stage: name, source: e },
    })
}

fn trace_csv(trace: &LSchemeTrace) -> String {
    let mut s = String::from("k,gamma,diff_l2,diff_grad,diff_linf,relative_diff,ratio,cg_iterations\n");
    for r in &trace.records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.k,
            format_sig(r.gamma),
            format_sig(r.diff_l2),
            format_sig(r.diff_grad),
            format_sig(r.diff_linf),
            format_sig(r.relative_diff),
            r.ratio.map(format_sig).unwrap_or_default(),
            r.solver_iterations
        );
    }
    s
}

fn tensor_csv(t: &HomogenizedTensor) -> String {
    let [l1, l2] = t.eigenvalues();
    format!(
        "a11,a12,a21,a22,porosity,lambda_min,lambda_max\n{},{},{},{},{},{},{}\n",
        format_sig(t.a0[0][0]),
        format_sig(t.a0[0][1]),
        format_sig(t.a0[1][0]),
        format_sig(t.a0[1][1]),
        format_sig(t.porosity),
        format_sig(l1.min(l2)),
        format_sig(l1.max(l2)),
    )
}

pub fn cell(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let (cells, t) = stage(
        "cell problems",
        compute_homogenized(cfg.cell_n, cfg.hole_radius, &cfg.coefficient_fn()),
    )?;
    let mut out = vec![write_file(cfg, "a0.csv", &tensor_csv(&t))?];
    out.extend(write_field(cfg, "chi1", "cell.mesh", &cells.chi[0])?);
    out.push(write_file(cfg, "chi2.csv", &crate::output::field_csv(&cells.chi[1]))?);
    println!(
        "a0 = [[{}, {}], [{}, {}]]  |Y| = {}",
        format_sig(t.a0[0][0]),
        format_sig(t.a0[0][1]),
        format_sig(t.a0[1][0]),
        format_sig(t.a0[1][1]),
        format_sig(t.porosity)
    );
    Ok(out)
}

pub fn micro(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let s = cfg.setup();
    let p = stage("micro mesh", s.micro_problem(cfg.perforation()))?;
    let (u, trace) = stage("micro L-scheme", p.run_lscheme())?;
    let mut out = vec![write_file(cfg, "micro_trace.csv", &trace_csv(&trace))?];
    out.extend(write_field(cfg, "micro_solution", "micro.mesh", &u)?);
    println!(
        "epsilon = {}  iterations = {}  converged = {}  fitted ratio = {}",
        cfg.epsilon_label(),
        trace.iterations(),
        trace.converged,
        trace.fitted_ratio().map(format_sig).unwrap_or_else(|| "n/a".into())
    );
    if !trace.converged {
        return Err(CliError::NotConverged {
            stage: "micro L-scheme",
            k_max: cfg.k_max,
        });
    }
    Ok(out)
}

pub fn newton(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let s = cfg.setup();
    let p = stage("micro mesh", s.micro_problem(cfg.perforation()))?;
    let sol = stage("newton", p.solve_newton(cfg.newton_tol, cfg.max_newton))?;
    let summary = format!(
        "epsilon,iterations,residual,max_h\n{},{},{},{}\n",
        format_sig(cfg.epsilon()),
        sol.iterations,
        format_sig(sol.residual),
        format_sig(p.mesh().max_h())
    );
    let mut out = vec![write_file(cfg, "newton.csv", &summary)?];
    out.extend(write_field(cfg, "newton_solution", "micro.mesh", &sol.field)?);
    println!(
        "epsilon = {}  newton iterations = {}  residual = {}",
        cfg.epsilon_label(),
        sol.iterations,
        format_sig(sol.residual)
    );
    Ok(out)
}

pub fn macro_run(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let s = cfg.setup();
    let tensor = stage("cell problems", s.homogenized_tensor())?;
    let p = stage("macro mesh", s.macro_problem(tensor))?;
    let (u, trace) = stage("macro L-scheme", p.run_lscheme())?;
    let mut out = vec![
        write_file(cfg, "a0.csv", &tensor_csv(&tensor))?,
        write_file(cfg, "macro_trace.csv", &trace_csv(&trace))?,
    ];
    out.extend(write_field(cfg, "macro_solution", "macro.mesh", &u)?);
    println!("iterations = {}  converged = {}", trace.iterations(), trace.converged);
    if !trace.converged {
        return Err(CliError::NotConverged {
            stage: "macro L-scheme",
            k_max: cfg.k_max,
        });
    }
    Ok(out)
}

fn epsilons(cfg: &RunConfig) -> Vec<f64> {
    cfg.epsilons.iter().map(|&m| 1.0 / m as f64).collect()
}

pub fn table1(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let report = stage("table1", run_table1(&cfg.setup(), &epsilons(cfg), cfg.k))?;
    let csv = report.to_csv();
    print!("{csv}");
    Ok(vec![write_file(cfg, "table1.csv", &csv)?])
}

pub fn table2(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let report = stage("table2", run_table2(&cfg.setup(), cfg.epsilon(), &cfg.ks))?;
    let csv = report.to_csv();
    print!("{csv}");
    Ok(vec![write_file(cfg, "table2.csv", &csv)?])
}

pub fn contraction(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let report = stage("contraction", run_contraction_report(&cfg.setup(), cfg.epsilon()))?;
    println!(
        "micro fitted ratio = {}  macro analytic factor = {}",
        report
            .micro_fitted_ratio
            .map(format_sig)
            .unwrap_or_else(|| "n/a".into()),
        format_sig(report.macro_factor)
    );
    Ok(vec![
        write_file(cfg, "contraction_micro.csv", &report.micro_csv())?,
        write_file(cfg, "contraction_macro.csv", &report.macro_csv())?,
    ])
}

pub fn convergence(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let rate = stage("convergence", run_corrector_rate(&cfg.setup(), &epsilons(cfg)))?;
    let slopes = format!(
        "l2_slope,h1_slope\n{},{}\n",
        format_sig(rate.l2_slope),
        format_sig(rate.h1_slope)
    );
    println!(
        "L2 slope = {}  H1 slope = {}",
        format_sig(rate.l2_slope),
        format_sig(rate.h1_slope)
    );
    Ok(vec![
        write_file(cfg, "convergence.csv", &rate.report.to_csv())?,
        write_file(cfg, "convergence_slopes.csv", &slopes)?,
    ])
}
