//! Dense real vectors and a seedable random source.
//!
//! Every other module works over [`Vector`], a finite-valued coordinate
//! vector in R^N. Construction rejects NaN and infinities, so downstream
//! operations only need to check dimensions.

use std::ops::Index;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::usage("vector dimension must be positive"));
        }
        if let Some(j) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::usage(format!("coordinate {j} is not finite")));
        }
        Ok(Vector(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "vector dimension must be positive");
        Vector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
            })
        }
    }

    /// Builds a vector from coordinates produced by the library's own
    /// arithmetic. Solvers check finiteness of iterates separately.
    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        debug_assert!(!coords.is_empty());
        Vector(coords)
    }

    pub fn scaled(&self, alpha: f64) -> Vector {
        Vector(self.0.iter().map(|c| alpha * c).collect())
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        other.check_dim(self.dim())?;
        Ok(Vector(sub_raw(&self.0, &other.0)))
    }

    /// `‖self − other‖` without allocating.
    pub fn distance(&self, other: &Vector) -> Result<f64> {
        other.check_dim(self.dim())?;
        Ok(dist_sq_raw(&self.0, &other.0).sqrt())
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Vector::new(v)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}

pub fn dot(x: &Vector, y: &Vector) -> Result<f64> {
    y.check_dim(x.dim())?;
    Ok(dot_raw(&x.0, &y.0))
}

pub fn norm(x: &Vector) -> f64 {
    dot_raw(&x.0, &x.0).sqrt()
}

/// `alpha * x + y`.
pub fn axpy(alpha: f64, x: &Vector, y: &Vector) -> Result<Vector> {
    y.check_dim(x.dim())?;
    Ok(Vector(
        x.0.iter().zip(&y.0).map(|(a, b)| alpha * a + b).collect(),
    ))
}

/// `alpha * x + (1 - alpha) * y`.
pub fn convex_combination(alpha: f64, x: &Vector, y: &Vector) -> Result<Vector> {
    y.check_dim(x.dim())?;
    Ok(Vector(combine_raw(alpha, &x.0, &y.0)))
}

pub(crate) fn dot_raw(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn dist_sq_raw(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub(crate) fn sub_raw(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub(crate) fn combine_raw(alpha: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    let beta = 1.0 - alpha;
    x.iter().zip(y).map(|(a, b)| alpha * a + beta * b).collect()
}

/// Deterministic seedable generator (ChaCha8) with labelled child streams.
///
/// Children are derived from `(seed, label, index)` alone, so the stream a
/// child produces does not depend on how much the parent has been drawn.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn derive(&self, label: &str, index: u64) -> RandomSource {
        let mut h = splitmix64(self.seed ^ 0x6a09_e667_f3bc_c908);
        h = splitmix64(h ^ fnv1a(label.as_bytes()));
        h = splitmix64(h ^ index);
        RandomSource::new(h)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..=hi)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn sample_uniform(&mut self, dim: usize, lo: f64, hi: f64) -> Result<Vector> {
        if !(lo < hi) {
            return Err(Error::usage(format!(
                "uniform bounds must satisfy lo < hi (got lo={lo}, hi={hi})"
            )));
        }
        if dim == 0 {
            return Err(Error::usage("vector dimension must be positive"));
        }
        Ok(Vector((0..dim).map(|_| self.uniform(lo, hi)).collect()))
    }

    /// Uniformly distributed direction on the unit sphere of R^dim.
    pub fn unit_direction(&mut self, dim: usize) -> Vector {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| self.standard_normal()).collect();
            let n = dot_raw(&v, &v).sqrt();
            if n > 1e-12 {
                return Vector(v.into_iter().map(|c| c / n).collect());
            }
        }
    }

    /// Fisher-Yates shuffle of `0..len`.
    pub fn permutation(&mut self, len: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..len).collect();
        for i in (1..len).rev() {
            let j = self.rng.random_range(0..=i);
            p.swap(i, j);
        }
        p
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}
