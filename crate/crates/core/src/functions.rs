//! Proximable convex objectives.
//!
//! Only the weighted shifted L1 family `f(x) = Σ_j ω_j |x_j − a_j|` is
//! provided. [`ProximableFunction`] is a closed enum so instance files can
//! carry function parameters exactly; new families are added as variants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecspace::Vector;

/// `f(x) = Σ_j ω_j |x_j − a_j|` with every `ω_j > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawL1")]
pub struct WeightedShiftedL1 {
    weights: Vector,
    shifts: Vector,
}

#[derive(Deserialize)]
struct RawL1 {
    weights: Vector,
    shifts: Vector,
}

impl TryFrom<RawL1> for WeightedShiftedL1 {
    type Error = Error;

    fn try_from(raw: RawL1) -> Result<Self> {
        WeightedShiftedL1::new(raw.weights, raw.shifts)
    }
}

impl WeightedShiftedL1 {
    pub fn new(weights: Vector, shifts: Vector) -> Result<Self> {
        shifts.check_dim(weights.dim())?;
        if let Some(j) = weights.as_slice().iter().position(|&w| w <= 0.0) {
            return Err(Error::usage(format!(
                "weight {j} must be strictly positive (got {})",
                weights[j]
            )));
        }
        Ok(WeightedShiftedL1 { weights, shifts })
    }

    pub fn weights(&self) -> &Vector {
        &self.weights
    }

    pub fn shifts(&self) -> &Vector {
        &self.shifts
    }

    fn eval_raw(&self, x: &[f64]) -> f64 {
        self.weights
            .as_slice()
            .iter()
            .zip(self.shifts.as_slice())
            .zip(x)
            .map(|((w, a), xj)| w * (xj - a).abs())
            .sum()
    }

    fn prox_raw(&self, gamma: f64, x: &[f64], out: &mut [f64]) {
        if gamma == 0.0 {
            out.copy_from_slice(x);
            return;
        }
        let w = self.weights.as_slice();
        let a = self.shifts.as_slice();
        for j in 0..x.len() {
            out[j] = a[j] + soft_threshold(x[j] - a[j], gamma * w[j]);
        }
    }

    fn subgrad_raw(&self, x: &[f64], out: &mut [f64]) {
        let w = self.weights.as_slice();
        let a = self.shifts.as_slice();
        for j in 0..x.len() {
            out[j] = w[j] * sign0(x[j] - a[j]);
        }
    }
}

/// `sign(v) · max(|v| − t, 0)`.
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProximableFunction {
    WeightedShiftedL1(WeightedShiftedL1),
}

impl From<WeightedShiftedL1> for ProximableFunction {
    fn from(f: WeightedShiftedL1) -> Self {
        ProximableFunction::WeightedShiftedL1(f)
    }
}

impl ProximableFunction {
    pub fn dim(&self) -> usize {
        match self {
            ProximableFunction::WeightedShiftedL1(f) => f.weights.dim(),
        }
    }

    pub fn eval(&self, x: &Vector) -> Result<f64> {
        x.check_dim(self.dim())?;
        Ok(self.eval_slice(x.as_slice()))
    }

    /// Unique minimizer of `γ f + ½‖x − ·‖²`; the identity when `γ = 0`.
    pub fn prox(&self, gamma: f64, x: &Vector) -> Result<Vector> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::usage(format!(
                "prox parameter must be finite and nonnegative (got {gamma})"
            )));
        }
        x.check_dim(self.dim())?;
        let mut out = vec![0.0; x.dim()];
        self.prox_into(gamma, x.as_slice(), &mut out);
        Ok(Vector::from_raw(out))
    }

    /// Minimal-norm subgradient: `ω_j sign(x_j − a_j)`, zero at kinks.
    pub fn subgrad(&self, x: &Vector) -> Result<Vector> {
        x.check_dim(self.dim())?;
        let mut out = vec![0.0; x.dim()];
        self.subgrad_into(x.as_slice(), &mut out);
        Ok(Vector::from_raw(out))
    }

    pub(crate) fn eval_slice(&self, x: &[f64]) -> f64 {
        match self {
            ProximableFunction::WeightedShiftedL1(f) => f.eval_raw(x),
        }
    }

    pub(crate) fn prox_into(&self, gamma: f64, x: &[f64], out: &mut [f64]) {
        match self {
            ProximableFunction::WeightedShiftedL1(f) => f.prox_raw(gamma, x, out),
        }
    }

    pub(crate) fn subgrad_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            ProximableFunction::WeightedShiftedL1(f) => f.subgrad_raw(x, out),
        }
    }
}
