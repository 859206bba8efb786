//! Run configuration: `key = value` files, flag overrides and validation.

use std::fmt::Write as _;
use std::path::PathBuf;

use lscheme_core::experiments::{format_sig, ExperimentSetup};
use lscheme_core::fem::ScalarFn;
use lscheme_core::mesh::PerforationSpec;
use lscheme_core::micro::oscillatory_coefficient;
use lscheme_core::reaction::{GammaSchedule, ReactionSpec, ScheduleKind};
use lscheme_core::sparse::SolverOptions;

/// Environment variable that replaces the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "LSCHEME_OUTPUT_DIR";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown configuration key '{0}'")]
    UnknownKey(String),
    #[error("invalid value '{value}' for key '{key}': {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("line {line}: expected 'key = value', found '{text}'")]
    Syntax { line: usize, text: String },
    #[error("cannot read configuration file {path}: {reason}")]
    Read { path: String, reason: String },
}

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

/// Diffusion coefficient of the cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefficientChoice {
    Oscillatory,
    Constant(f64),
}

/// Every parameter of a run. The defaults are the standard experiment:
/// ε = 1/4, r = 0.4, p = 2, η = 0.4, δ₀ = δ₁ = 1, α = 0, f = 1 and the
/// geometric schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub epsilon_cells: usize,
    pub epsilons: Vec<usize>,
    pub hole_radius: f64,
    pub n_per_cell: usize,
    pub cell_n: usize,
    pub macro_n: usize,
    pub alpha: f64,
    pub eta: f64,
    pub p: f64,
    pub delta0: f64,
    pub delta1: f64,
    pub schedule: ScheduleKind,
    pub harmonic_c: f64,
    pub source: f64,
    pub coefficient: CoefficientChoice,
    pub k_max: usize,
    pub stop_tol: f64,
    pub solver_tol: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub k: usize,
    pub ks: Vec<usize>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            epsilon_cells: 4,
            epsilons: vec![2, 4, 10],
            hole_radius: 0.4,
            n_per_cell: 32,
            cell_n: 128,
            macro_n: 128,
            alpha: 0.0,
            eta: 0.4,
            p: 2.0,
            delta0: 1.0,
            delta1: 1.0,
            schedule: ScheduleKind::Geometric,
            harmonic_c: 1.0,
            source: 1.0,
            coefficient: CoefficientChoice::Oscillatory,
            k_max: 30,
            stop_tol: 1e-8,
            solver_tol: 1e-10,
            newton_tol: 1e-10,
            max_newton: 30,
            k: 2,
            ks: vec![1, 2, 3, 4],
            output_dir: PathBuf::from("output"),
        }
    }
}

/// Recognized keys with a one-line description each.
pub const KEYS: [(&str, &str); 23] = [
    ("epsilon", "cell size; 1/epsilon must be an integer (accepts 1/m)"),
    ("epsilons", "comma-separated cell sizes for table1 and convergence"),
    ("hole_radius", "hole radius in cell units, in (0, 0.5)"),
    ("n_per_cell", "grid intervals per cell side of the perforated mesh"),
    ("cell_n", "grid intervals of the cell-problem mesh"),
    ("macro_n", "grid intervals of the homogenized square mesh"),
    ("alpha", "reaction scaling exponent, >= 0"),
    ("eta", "stabilization offset, > 0"),
    ("p", "power of the reaction, > 1"),
    ("delta0", "slope constant of the regularization"),
    ("delta1", "Lipschitz bound in the stabilization"),
    ("schedule", "geometric or harmonic"),
    ("harmonic_c", "constant of the harmonic schedule"),
    ("source", "constant source term f"),
    ("coefficient", "'oscillatory' or a positive constant"),
    ("k_max", "maximum number of L-scheme iterations"),
    ("stop_tol", "relative successive-difference tolerance"),
    ("solver_tol", "relative residual tolerance of conjugate gradients"),
    ("newton_tol", "relative residual tolerance of Newton"),
    ("max_newton", "maximum number of Newton iterations"),
    ("k", "macroscopic iterate compared in table1"),
    ("ks", "comma-separated iterates for table2"),
    ("output_dir", "directory receiving reports, fields and the manifest"),
];

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = value.parse().map_err(|_| bad(key, value, "not a number"))?;
    if !v.is_finite() {
        return Err(bad(key, value, "must be finite"));
    }
    Ok(v)
}

fn parse_usize(key: &str, value: &str) -> Result<usize, ConfigError> {
    value.parse().map_err(|_| bad(key, value, "not a nonnegative integer"))
}

/// Number of cells per side for a cell size written as `1/m` or a decimal.
/// Decimals within 0.5% of some `1/m` (such as 0.166) are read as `1/m`.
pub fn parse_epsilon(key: &str, value: &str) -> Result<usize, ConfigError> {
    if let Some((num, den)) = value.split_once('/') {
        if num.trim() != "1" {
            return Err(bad(key, value, "fractions must have the form 1/m"));
        }
        let m = parse_usize(key, den.trim())?;
        if m == 0 {
            return Err(bad(key, value, "denominator must be positive"));
        }
        return Ok(m);
    }
    let e = parse_f64(key, value)?;
    if !(e > 0.0 && e <= 1.0) {
        return Err(bad(key, value, "epsilon must lie in (0, 1]"));
    }
    let m = (1.0 / e).round();
    if (e * m - 1.0).abs() > 0.005 {
        return Err(bad(
            key,
            value,
            format!(
                "1/epsilon = {} is not an integer, so cells cannot tile the square",
                1.0 / e
            ),
        ));
    }
    Ok(m as usize)
}

fn parse_list<T>(
    key: &str,
    value: &str,
    item: impl Fn(&str, &str) -> Result<T, ConfigError>,
) -> Result<Vec<T>, ConfigError> {
    let out: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| item(key, s))
        .collect::<Result<_, _>>()?;
    if out.is_empty() {
        return Err(bad(key, value, "list is empty"));
    }
    Ok(out)
}

fn epsilon_text(m: usize) -> String {
    format!("1/{m}")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "epsilon" => self.epsilon_cells = parse_epsilon(key, value)?,
            "epsilons" => self.epsilons = parse_list(key, value, parse_epsilon)?,
            "hole_radius" => self.hole_radius = parse_f64(key, value)?,
            "n_per_cell" => self.n_per_cell = parse_usize(key, value)?,
            "cell_n" => self.cell_n = parse_usize(key, value)?,
            "macro_n" => self.macro_n = parse_usize(key, value)?,
            "alpha" => self.alpha = parse_f64(key, value)?,
            "eta" => self.eta = parse_f64(key, value)?,
            "p" => self.p = parse_f64(key, value)?,
            "delta0" => self.delta0 = parse_f64(key, value)?,
            "delta1" => self.delta1 = parse_f64(key, value)?,
            "schedule" => self.schedule = value.parse().map_err(|e: String| bad(key, value, e))?,
            "harmonic_c" => self.harmonic_c = parse_f64(key, value)?,
            "source" => self.source = parse_f64(key, value)?,
            "coefficient" => {
                self.coefficient = if value.eq_ignore_ascii_case("oscillatory") {
                    CoefficientChoice::Oscillatory
                } else {
                    CoefficientChoice::Constant(parse_f64(key, value)?)
                }
            }
            "k_max" => self.k_max = parse_usize(key, value)?,
            "stop_tol" => self.stop_tol = parse_f64(key, value)?,
            "solver_tol" => self.solver_tol = parse_f64(key, value)?,
            "newton_tol" => self.newton_tol = parse_f64(key, value)?,
            "max_newton" => self.max_newton = parse_usize(key, value)?,
            "k" => self.k = parse_usize(key, value)?,
            "ks" => self.ks = parse_list(key, value, parse_usize)?,
            "output_dir" => {
                if value.is_empty() {
                    return Err(bad(key, value, "must not be empty"));
                }
                self.output_dir = PathBuf::from(value)
            }
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: line.into(),
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// Defaults, then the file, then the environment, then flag overrides.
    pub fn load(
        file: Option<&std::path::Path>,
        env_output_dir: Option<String>,
        overrides: &[(String, String)],
    ) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            cfg.apply_text(&text)?;
        }
        if let Some(dir) = env_output_dir.filter(|d| !d.is_empty()) {
            cfg.set("output_dir", &dir)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &str, value: String, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(bad(key, &value, reason))
            }
        };
        PerforationSpec::from_cells(self.epsilon_cells, self.hole_radius)
            .map_err(|e| bad("hole_radius", &self.hole_radius.to_string(), e.to_string()))?;
        check(
            self.n_per_cell >= 4,
            "n_per_cell",
            self.n_per_cell.to_string(),
            "must be at least 4",
        )?;
        check(
            self.cell_n >= 4,
            "cell_n",
            self.cell_n.to_string(),
            "must be at least 4",
        )?;
        check(
            self.macro_n >= 2,
            "macro_n",
            self.macro_n.to_string(),
            "must be at least 2",
        )?;
        check(
            self.alpha >= 0.0,
            "alpha",
            self.alpha.to_string(),
            "must be nonnegative",
        )?;
        check(self.eta > 0.0, "eta", self.eta.to_string(), "must be positive")?;
        ReactionSpec::new(self.p, self.delta0, self.delta1)
            .map_err(|e| bad("p", &self.p.to_string(), e.to_string()))?;
        if self.schedule == ScheduleKind::Harmonic {
            GammaSchedule::harmonic(self.harmonic_c)
                .map_err(|e| bad("harmonic_c", &self.harmonic_c.to_string(), e.to_string()))?;
        }
        if let CoefficientChoice::Constant(c) = self.coefficient {
            check(c > 0.0, "coefficient", c.to_string(), "must be positive")?;
        }
        check(self.k_max >= 1, "k_max", self.k_max.to_string(), "must be at least 1")?;
        check(
            self.stop_tol > 0.0,
            "stop_tol",
            self.stop_tol.to_string(),
            "must be positive",
        )?;
        check(
            self.solver_tol > 0.0,
            "solver_tol",
            self.solver_tol.to_string(),
            "must be positive",
        )?;
        check(
            self.newton_tol > 0.0,
            "newton_tol",
            self.newton_tol.to_string(),
            "must be positive",
        )?;
        check(
            self.max_newton >= 1,
            "max_newton",
            self.max_newton.to_string(),
            "must be at least 1",
        )?;
        check(self.k >= 1, "k", self.k.to_string(), "must be at least 1")?;
        check(
            self.ks.iter().all(|&k| k >= 1),
            "ks",
            format!("{:?}", self.ks),
            "iterates start at 1",
        )?;
        check(
            !self.epsilons.contains(&0),
            "epsilons",
            format!("{:?}", self.epsilons),
            "cells must be positive",
        )?;
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        1.0 / self.epsilon_cells as f64
    }

    pub fn perforation(&self) -> PerforationSpec {
        PerforationSpec::from_cells(self.epsilon_cells, self.hole_radius).expect("validated")
    }

    pub fn gamma_schedule(&self) -> GammaSchedule {
        match self.schedule {
            ScheduleKind::Geometric => GammaSchedule::Geometric { p: self.p },
            ScheduleKind::Harmonic => GammaSchedule::Harmonic { c: self.harmonic_c },
        }
    }

    pub fn coefficient_fn(&self) -> ScalarFn {
        match self.coefficient {
            CoefficientChoice::Oscillatory => oscillatory_coefficient(),
            CoefficientChoice::Constant(c) => ScalarFn::constant(c),
        }
    }

    pub fn setup(&self) -> ExperimentSetup {
        ExperimentSetup {
            hole_radius: self.hole_radius,
            n_per_cell: self.n_per_cell,
            cell_n: self.cell_n,
            macro_n: self.macro_n,
            alpha: self.alpha,
            eta: self.eta,
            reaction: ReactionSpec::new(self.p, self.delta0, self.delta1).expect("validated"),
            schedule: self.gamma_schedule(),
            source: ScalarFn::constant(self.source),
            coefficient: self.coefficient_fn(),
            k_max: self.k_max,
            stop_tol: self.stop_tol,
            solver: SolverOptions::with_tol(self.solver_tol),
            newton_tol: self.newton_tol,
            max_newton: self.max_newton,
        }
    }

    /// Every effective parameter as `key = value` lines, readable by
    /// [`RunConfig::apply_text`].
    pub fn to_text(&self) -> String {
        let list = |v: &[usize], f: &dyn Fn(usize) -> String| v.iter().map(|&m| f(m)).collect::<Vec<_>>().join(",");
        let coefficient = match self.coefficient {
            CoefficientChoice::Oscillatory => "oscillatory".to_string(),
            CoefficientChoice::Constant(c) => format!("{c:?}"),
        };
        let values = [
            epsilon_text(self.epsilon_cells),
            list(&self.epsilons, &epsilon_text),
            format!("{:?}", self.hole_radius),
            self.n_per_cell.to_string(),
            self.cell_n.to_string(),
            self.macro_n.to_string(),
            format!("{:?}", self.alpha),
            format!("{:?}", self.eta),
            format!("{:?}", self.p),
            format!("{:?}", self.delta0),
            format!("{:?}", self.delta1),
            self.schedule.to_string(),
            format!("{:?}", self.harmonic_c),
            format!("{:?}", self.source),
            coefficient,
            self.k_max.to_string(),
            format!("{:?}", self.stop_tol),
            format!("{:?}", self.solver_tol),
            format!("{:?}", self.newton_tol),
            self.max_newton.to_string(),
            self.k.to_string(),
            list(&self.ks, &|k| k.to_string()),
            self.output_dir.display().to_string(),
        ];
        let mut s = String::new();
        for ((key, _), value) in KEYS.iter().zip(values) {
            let _ = writeln!(s, "{key} = {value}");
        }
        s
    }

    /// Cell size as a decimal with six significant digits.
    pub fn epsilon_label(&self) -> String {
        format_sig(self.epsilon())
    }
}
