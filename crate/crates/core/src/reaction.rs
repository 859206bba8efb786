//! Power-law reaction degenerate at zero, its regularizations and the
//! regularization schedules.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Result};

/// Power-law reaction `R(u) = u^p` on `[0, 1]`, `R(u) = u` elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactionSpec {
    p: f64,
    delta0: f64,
    delta1: f64,
}

/// Sampled check of the degenerate-class conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegenerateCheck {
    pub min_derivative: f64,
    pub max_derivative: f64,
    /// Smallest |u| at which the derivative fell below `1e-8`.
    pub degenerate_at: Option<f64>,
    /// Whether every sampled derivative is at most `delta1`.
    pub within_lipschitz: bool,
}

impl ReactionSpec {
    /// `delta0` is the slope constant of the regularization, `delta1` the
    /// Lipschitz bound used for the stabilization parameter.
    pub fn new(p: f64, delta0: f64, delta1: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(invalid(format!("power exponent must exceed 1, got {p}")));
        }
        if !(delta0 > 0.0) || !delta0.is_finite() {
            return Err(invalid(format!("delta0 must be positive, got {delta0}")));
        }
        if !(delta1 > 0.0) || !delta1.is_finite() {
            return Err(invalid(format!("delta1 must be positive, got {delta1}")));
        }
        Ok(ReactionSpec { p, delta0, delta1 })
    }

    /// `delta0 = delta1 = 1`.
    pub fn power_law(p: f64) -> Result<Self> {
        Self::new(p, 1.0, 1.0)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    pub fn delta1(&self) -> f64 {
        self.delta1
    }

    /// Regularization order `σ = p / (p - 1)`.
    pub fn sigma(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// Point where the derivative vanishes.
    pub fn degenerate_point(&self) -> f64 {
        0.0
    }

    /// Largest derivative of `R`, attained at `u = 1`.
    pub fn lipschitz_constant(&self) -> f64 {
        self.p.max(1.0)
    }

    pub fn value(&self, u: f64) -> f64 {
        if (0.0..=1.0).contains(&u) {
            u.powf(self.p)
        } else {
            u
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        if (0.0..1.0).contains(&u) {
            self.p * u.powf(self.p - 1.0)
        } else {
            1.0
        }
    }

    fn check_gamma(&self, gamma: f64) -> Result<f64> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(invalid(format!(
                "regularization parameter must lie in (0, 1], got {gamma}"
            )));
        }
        let slope = self.delta0 * gamma;
        if slope > 1.0 {
            return Err(invalid(format!(
                "delta0 * gamma = {slope} exceeds the unit slope of the outer branches"
            )));
        }
        Ok(slope)
    }

    /// `R_γ(u) = max{u^p, δ₀γu}` on `[0, 1]`, unchanged elsewhere.
    pub fn regularized_value(&self, gamma: f64, u: f64) -> Result<f64> {
        let s = self.check_gamma(gamma)?;
        Ok(self.regularized_value_unchecked(s, u))
    }

    pub fn regularized_derivative(&self, gamma: f64, u: f64) -> Result<f64> {
        let s = self.check_gamma(gamma)?;
        Ok(self.regularized_derivative_unchecked(s, u))
    }

    fn regularized_value_unchecked(&self, slope: f64, u: f64) -> f64 {
        if (0.0..=1.0).contains(&u) {
            u.powf(self.p).max(slope * u)
        } else {
            u
        }
    }

    fn regularized_derivative_unchecked(&self, slope: f64, u: f64) -> f64 {
        if (0.0..1.0).contains(&u) {
            if slope * u >= u.powf(self.p) {
                slope
            } else {
                self.p * u.powf(self.p - 1.0)
            }
        } else {
            1.0
        }
    }

    /// Applies `R_γ` to every entry.
    pub fn regularized_map(&self, gamma: f64, u: &[f64]) -> Result<Vec<f64>> {
        let s = self.check_gamma(gamma)?;
        Ok(u.iter().map(|&v| self.regularized_value_unchecked(s, v)).collect())
    }

    /// Crossover `u* = (δ₀γ)^{1/(p-1)}` below which the linear branch is active.
    pub fn crossover(&self, gamma: f64) -> Result<f64> {
        let s = self.check_gamma(gamma)?;
        Ok(s.powf(1.0 / (self.p - 1.0)))
    }

    /// Analytic bound `p^{1/(1-p)} |1-p| (δ₀γ)^{p/(p-1)}` on `sup |R - R_γ|`.
    pub fn regularization_gap(&self, gamma: f64) -> Result<f64> {
        let s = self.check_gamma(gamma)?;
        let p = self.p;
        Ok(p.powf(1.0 / (1.0 - p)) * (1.0 - p).abs() * s.powf(p / (p - 1.0)))
    }

    /// `sup |R - R_γ|` sampled on `samples` points of `[0, u*]`, where the
    /// two functions differ.
    pub fn sampled_gap(&self, gamma: f64, samples: usize) -> Result<f64> {
        let s = self.check_gamma(gamma)?;
        let top = self.crossover(gamma)?;
        let n = samples.max(2);
        Ok((0..=n)
            .map(|i| {
                let u = top * i as f64 / n as f64;
                (self.regularized_value_unchecked(s, u) - self.value(u)).abs()
            })
            .fold(0.0, f64::max))
    }

    /// Samples `R'` on `[lo, hi]` and reports the degenerate-class conditions
    /// without rejecting the `ReactionSpec`.
    pub fn check_degenerate_class(&self, lo: f64, hi: f64, samples: usize) -> DegenerateCheck {
        let n = samples.max(2);
        let mut check = DegenerateCheck {
            min_derivative: f64::INFINITY,
            max_derivative: f64::NEG_INFINITY,
            degenerate_at: None,
            within_lipschitz: true,
        };
        for i in 0..=n {
            let u = lo + (hi - lo) * i as f64 / n as f64;
            let d = self.derivative(u);
            check.min_derivative = check.min_derivative.min(d);
            check.max_derivative = check.max_derivative.max(d);
            if d < 1e-8 && check.degenerate_at.is_none_or(|x| u.abs() < x.abs()) {
                check.degenerate_at = Some(u);
            }
            if d > self.delta1 + 1e-12 {
                check.within_lipschitz = false;
            }
        }
        check
    }
}

/// Choice of regularization parameters `γ_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSchedule {
    /// `γ_k = 2^{-[(p-1)² + (k+1)(p-1)]}`.
    Geometric { p: f64 },
    /// `γ_k = c / (k+1)`.
    Harmonic { c: f64 },
}

impl GammaSchedule {
    pub fn geometric(p: f64) -> Result<Self> {
        if !(p > 1.0) {
            return Err(invalid(format!("power exponent must exceed 1, got {p}")));
        }
        Ok(GammaSchedule::Geometric { p })
    }

    pub fn harmonic(c: f64) -> Result<Self> {
        if !(c > 0.0 && c <= 2.0) {
            return Err(invalid(format!("harmonic constant must lie in (0, 2], got {c}")));
        }
        Ok(GammaSchedule::Harmonic { c })
    }

    pub fn gamma(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(invalid("schedule index starts at 1"));
        }
        let k = k as f64;
        Ok(match *self {
            GammaSchedule::Geometric { p } => (-((p - 1.0).powi(2) + (k + 1.0) * (p - 1.0))).exp2(),
            GammaSchedule::Harmonic { c } => c / (k + 1.0),
        })
    }

    /// Geometric rate `ω` with `γ_{k-1}^σ / γ_k ≤ C ω^k`; the exponents
    /// telescope to exactly `2^{-k}` for every `p`.
    pub fn omega(&self) -> Option<f64> {
        match self {
            GammaSchedule::Geometric { .. } => Some(0.5),
            GammaSchedule::Harmonic { .. } => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GammaSchedule::Geometric { .. } => "geometric",
            GammaSchedule::Harmonic { .. } => "harmonic",
        }
    }
}

/// Schedule family without its parameter, as named in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Geometric,
    Harmonic,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Geometric => "geometric",
            ScheduleKind::Harmonic => "harmonic",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "geometric" => Ok(ScheduleKind::Geometric),
            "harmonic" => Ok(ScheduleKind::Harmonic),
            other => Err(format!("unknown schedule '{other}' (expected geometric or harmonic)")),
        }
    }
}
