//! Step-size sequences and their admissibility checks.
//!
//! Iteration indices are zero-based. The Halpern-type method needs
//! diminishing `γ_n = c/(n+1)^a` and `α_n = c'/(n+1)^b` with
//! `a ∈ (0, 1/2)`, `b ∈ (a, 1 − a)`, `a + b < 1`; the KM-type method and the
//! subgradient baselines take `γ_n = c/(n+1)^a` with `a ∈ (0, 1]` and a
//! constant relaxation `α_n = t ∈ (0, 1)`. These parameter ranges are
//! sufficient for the limit conditions the convergence theory asks for.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that yields a step size for a zero-based iteration index.
pub trait StepSequence {
    fn at(&self, n: usize) -> f64;
}

/// `scale / (n + 1)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    scale: f64,
    exponent: f64,
}

impl PowerLaw {
    pub fn new(scale: f64, exponent: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::usage(format!("scale must be positive (got {scale})")));
        }
        if !(exponent >= 0.0) || !exponent.is_finite() {
            return Err(Error::usage(format!(
                "exponent must be nonnegative (got {exponent})"
            )));
        }
        Ok(PowerLaw { scale, exponent })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn value_at(&self, n: u64) -> f64 {
        self.scale / ((n as f64) + 1.0).powf(self.exponent)
    }
}

impl StepSequence for PowerLaw {
    fn at(&self, n: usize) -> f64 {
        self.value_at(n as u64)
    }
}

/// A constant relaxation parameter `t ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    value: f64,
}

impl Constant {
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::usage(format!(
                "constant step must lie in (0, 1) (got {value})"
            )));
        }
        Ok(Constant { value })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn value_at(&self, _n: u64) -> f64 {
        self.value
    }
}

impl StepSequence for Constant {
    fn at(&self, _n: usize) -> f64 {
        self.value
    }
}

/// Unchecked constant sequence. Used to drive solvers through degenerate
/// regimes (`α ≡ 0`, `α ≡ 1`, `γ ≡ 0`) that the validated entry points
/// reject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixed(pub f64);

impl StepSequence for Fixed {
    fn at(&self, _n: usize) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    Halpern,
    Km,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaRule {
    PowerLaw(PowerLaw),
    Constant(Constant),
}

/// Validated step-size pair for one solver family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulePair {
    pub gamma: PowerLaw,
    pub alpha: AlphaRule,
    pub mode: ScheduleMode,
}

impl SchedulePair {
    pub fn halpern(gamma: PowerLaw, alpha: PowerLaw) -> Result<Self> {
        validate_halpern(&gamma, &alpha).into_result()?;
        Ok(SchedulePair {
            gamma,
            alpha: AlphaRule::PowerLaw(alpha),
            mode: ScheduleMode::Halpern,
        })
    }

    pub fn km(gamma: PowerLaw, alpha: Constant) -> Result<Self> {
        validate_km(&gamma, &alpha).into_result()?;
        Ok(SchedulePair {
            gamma,
            alpha: AlphaRule::Constant(alpha),
            mode: ScheduleMode::Km,
        })
    }
}

/// Outcome of a schedule check: the list of violated constraints.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Validation {
    pub violations: Vec<String>,
}

impl Validation {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::usage(format!(
                "invalid schedule: {}",
                self.violations.join("; ")
            )))
        }
    }
}

impl fmt::Display for Validation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            write!(f, "valid")
        } else {
            write!(f, "invalid: {}", self.violations.join("; "))
        }
    }
}

pub fn validate_halpern(gamma: &PowerLaw, alpha: &PowerLaw) -> Validation {
    let a = gamma.exponent;
    let b = alpha.exponent;
    let mut violations = Vec::new();
    if !(a > 0.0 && a < 0.5) {
        violations.push("a ∉ (0, 1/2)".to_string());
    }
    if b <= a {
        violations.push("b ≤ a".to_string());
    }
    if b >= 1.0 - a {
        violations.push("b ≥ 1 − a".to_string());
    }
    if a + b >= 1.0 {
        violations.push("a + b ≥ 1".to_string());
    }
    Validation { violations }
}

pub fn validate_km(gamma: &PowerLaw, alpha: &Constant) -> Validation {
    validate_km_raw(gamma, alpha.value)
}

/// Like [`validate_km`] but for a raw `t` that may sit outside `(0, 1)`, as
/// supplied on a command line.
pub fn validate_km_raw(gamma: &PowerLaw, t: f64) -> Validation {
    let a = gamma.exponent;
    let mut violations = Vec::new();
    if a <= 0.0 {
        violations.push("a ≤ 0 (γ_n does not vanish)".to_string());
    }
    if a > 1.0 {
        violations.push("a > 1 (Σ γ_n < ∞)".to_string());
    }
    if !(t > 0.0 && t < 1.0) {
        violations.push("t ∉ (0, 1)".to_string());
    }
    Validation { violations }
}
