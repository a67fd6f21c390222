//! Firmly nonexpansive operators assembled from metric projections.
//!
//! Operators are plain data trees ([`NonexpansiveOperator`]) rather than
//! closures, so an instance file can store them and rebuild the exact same
//! mapping. [`make_gcfs_operator`] builds the half-averaged operator
//! `½(Id + P_X Σ_k w_k P_{C_k})` whose fixed point set is the generalized
//! convex feasible set of the sets `C_k` relative to the bounding set `X`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecspace::{dist_sq_raw, dot_raw, Vector};

/// Tolerance used by feasibility (membership) checks.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawSet")]
pub enum ClosedConvexSet {
    Ball { center: Vector, radius: f64 },
    HalfSpace { normal: Vector, offset: f64 },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawSet {
    Ball { center: Vector, radius: f64 },
    HalfSpace { normal: Vector, offset: f64 },
}

impl TryFrom<RawSet> for ClosedConvexSet {
    type Error = Error;

    fn try_from(raw: RawSet) -> Result<Self> {
        match raw {
            RawSet::Ball { center, radius } => ClosedConvexSet::ball(center, radius),
            RawSet::HalfSpace { normal, offset } => ClosedConvexSet::half_space(normal, offset),
        }
    }
}

impl ClosedConvexSet {
    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::usage(format!(
                "ball radius must be positive and finite (got {radius})"
            )));
        }
        Ok(ClosedConvexSet::Ball { center, radius })
    }

    pub fn unit_ball(dim: usize) -> Self {
        ClosedConvexSet::Ball {
            center: Vector::zeros(dim),
            radius: 1.0,
        }
    }

    /// `{x : ⟨normal, x⟩ ≤ offset}`.
    pub fn half_space(normal: Vector, offset: f64) -> Result<Self> {
        if normal.as_slice().iter().all(|&c| c == 0.0) {
            return Err(Error::usage("half-space normal must be nonzero"));
        }
        if !offset.is_finite() {
            return Err(Error::usage("half-space offset must be finite"));
        }
        Ok(ClosedConvexSet::HalfSpace { normal, offset })
    }

    pub fn dim(&self) -> usize {
        match self {
            ClosedConvexSet::Ball { center, .. } => center.dim(),
            ClosedConvexSet::HalfSpace { normal, .. } => normal.dim(),
        }
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> Result<bool> {
        x.check_dim(self.dim())?;
        let x = x.as_slice();
        Ok(match self {
            ClosedConvexSet::Ball { center, radius } => {
                dist_sq_raw(x, center.as_slice()).sqrt() <= radius + tol
            }
            ClosedConvexSet::HalfSpace { normal, offset } => {
                dot_raw(normal.as_slice(), x) <= offset + tol
            }
        })
    }

    pub fn project(&self, x: &Vector) -> Result<Vector> {
        x.check_dim(self.dim())?;
        let mut out = x.as_slice().to_vec();
        self.project_in_place(&mut out);
        Ok(Vector::from_raw(out))
    }

    pub(crate) fn project_in_place(&self, x: &mut [f64]) {
        match self {
            ClosedConvexSet::Ball { center, radius } => {
                let c = center.as_slice();
                let d = dist_sq_raw(x, c).sqrt();
                if d > *radius {
                    let s = radius / d;
                    for (xj, cj) in x.iter_mut().zip(c) {
                        *xj = cj + s * (*xj - cj);
                    }
                }
            }
            ClosedConvexSet::HalfSpace { normal, offset } => {
                let c = normal.as_slice();
                let excess = dot_raw(c, x) - offset;
                if excess > 0.0 {
                    let s = excess / dot_raw(c, c);
                    for (xj, cj) in x.iter_mut().zip(c) {
                        *xj -= s * cj;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonexpansiveOperator {
    Identity,
    Projection {
        set: ClosedConvexSet,
    },
    /// `Σ_k w_k op_k`, weights positive and summing to one.
    WeightedAverage {
        ops: Vec<NonexpansiveOperator>,
        weights: Vec<f64>,
    },
    /// `outer ∘ inner`.
    Compose {
        outer: Box<NonexpansiveOperator>,
        inner: Box<NonexpansiveOperator>,
    },
    /// `½(Id + inner)`.
    HalfAveraged {
        inner: Box<NonexpansiveOperator>,
    },
}

impl NonexpansiveOperator {
    pub fn projection(set: ClosedConvexSet) -> Self {
        NonexpansiveOperator::Projection { set }
    }

    pub fn weighted_average(ops: Vec<NonexpansiveOperator>, weights: Vec<f64>) -> Result<Self> {
        let op = NonexpansiveOperator::WeightedAverage { ops, weights };
        op.validate()?;
        Ok(op)
    }

    pub fn compose(outer: NonexpansiveOperator, inner: NonexpansiveOperator) -> Self {
        NonexpansiveOperator::Compose {
            outer: Box::new(outer),
            inner: Box::new(inner),
        }
    }

    pub fn half_averaged(inner: NonexpansiveOperator) -> Self {
        NonexpansiveOperator::HalfAveraged {
            inner: Box::new(inner),
        }
    }

    /// Ambient dimension, or `None` for a tree made only of identities.
    pub fn dim(&self) -> Option<usize> {
        match self {
            NonexpansiveOperator::Identity => None,
            NonexpansiveOperator::Projection { set } => Some(set.dim()),
            NonexpansiveOperator::WeightedAverage { ops, .. } => ops.iter().find_map(|o| o.dim()),
            NonexpansiveOperator::Compose { outer, inner } => outer.dim().or_else(|| inner.dim()),
            NonexpansiveOperator::HalfAveraged { inner } => inner.dim(),
        }
    }

    /// Checks structural invariants of the whole tree: weight positivity and
    /// normalization, and dimension agreement between all leaves.
    pub fn validate(&self) -> Result<()> {
        let mut dim = None;
        self.validate_inner(&mut dim)
    }

    fn validate_inner(&self, dim: &mut Option<usize>) -> Result<()> {
        match self {
            NonexpansiveOperator::Identity => Ok(()),
            NonexpansiveOperator::Projection { set } => match *dim {
                Some(d) if d != set.dim() => Err(Error::DimensionMismatch {
                    expected: d,
                    found: set.dim(),
                }),
                _ => {
                    *dim = Some(set.dim());
                    Ok(())
                }
            },
            NonexpansiveOperator::WeightedAverage { ops, weights } => {
                check_weights(ops.len(), weights)?;
                ops.iter().try_for_each(|o| o.validate_inner(dim))
            }
            NonexpansiveOperator::Compose { outer, inner } => {
                outer.validate_inner(dim)?;
                inner.validate_inner(dim)
            }
            NonexpansiveOperator::HalfAveraged { inner } => inner.validate_inner(dim),
        }
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        if let Some(d) = self.dim() {
            x.check_dim(d)?;
        }
        let mut out = vec![0.0; x.dim()];
        self.apply_into(x.as_slice(), &mut out);
        Ok(Vector::from_raw(out))
    }

    /// `‖x − T(x)‖`.
    pub fn residual(&self, x: &Vector) -> Result<f64> {
        let t = self.apply(x)?;
        Ok(dist_sq_raw(x.as_slice(), t.as_slice()).sqrt())
    }

    pub(crate) fn residual_slice(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        self.apply_into(x, scratch);
        dist_sq_raw(x, scratch).sqrt()
    }

    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            NonexpansiveOperator::Identity => out.copy_from_slice(x),
            NonexpansiveOperator::Projection { set } => {
                out.copy_from_slice(x);
                set.project_in_place(out);
            }
            NonexpansiveOperator::WeightedAverage { ops, weights } => {
                out.fill(0.0);
                let mut tmp = vec![0.0; x.len()];
                for (op, w) in ops.iter().zip(weights) {
                    op.apply_into(x, &mut tmp);
                    for (o, t) in out.iter_mut().zip(&tmp) {
                        *o += w * t;
                    }
                }
            }
            NonexpansiveOperator::Compose { outer, inner } => {
                let mut mid = vec![0.0; x.len()];
                inner.apply_into(x, &mut mid);
                outer.apply_into(&mid, out);
            }
            NonexpansiveOperator::HalfAveraged { inner } => {
                inner.apply_into(x, out);
                for (o, xj) in out.iter_mut().zip(x) {
                    *o = 0.5 * (xj + *o);
                }
            }
        }
    }
}

fn check_weights(count: usize, weights: &[f64]) -> Result<()> {
    if count == 0 {
        return Err(Error::usage("weighted average needs at least one operator"));
    }
    if weights.len() != count {
        return Err(Error::usage(format!(
            "expected {count} weights, got {}",
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::usage(format!("weights must be positive (got {w})")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::usage(format!("weights must sum to 1 (got {sum})")));
    }
    Ok(())
}

/// `½(Id + P_bounding Σ_k w_k P_{sets[k]})`.
pub fn make_gcfs_operator(
    bounding: ClosedConvexSet,
    sets: Vec<ClosedConvexSet>,
    weights: Vec<f64>,
) -> Result<NonexpansiveOperator> {
    check_weights(sets.len(), &weights)?;
    let dim = bounding.dim();
    for s in &sets {
        if s.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: s.dim(),
            });
        }
    }
    let average = NonexpansiveOperator::WeightedAverage {
        ops: sets.into_iter().map(NonexpansiveOperator::projection).collect(),
        weights,
    };
    Ok(NonexpansiveOperator::half_averaged(NonexpansiveOperator::compose(
        NonexpansiveOperator::projection(bounding),
        average,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecspace::{norm, RandomSource};

    fn v(c: &[f64]) -> Vector {
        Vector::new(c.to_vec()).unwrap()
    }

    fn random_gcfs(rng: &mut RandomSource, dim: usize, k: usize, lo: f64, hi: f64) -> NonexpansiveOperator {
        let sets = (0..k)
            .map(|_| {
                let c = rng.unit_direction(dim);
                ClosedConvexSet::half_space(c, rng.uniform(lo, hi)).unwrap()
            })
            .collect();
        make_gcfs_operator(ClosedConvexSet::unit_ball(dim), sets, vec![1.0 / k as f64; k]).unwrap()
    }

    fn firm_gap(op: &NonexpansiveOperator, x: &Vector, y: &Vector) -> f64 {
        let tx = op.apply(x).unwrap();
        let ty = op.apply(y).unwrap();
        let rx = x.sub(&tx).unwrap();
        let ry = y.sub(&ty).unwrap();
        norm(&tx.sub(&ty).unwrap()).powi(2) + norm(&rx.sub(&ry).unwrap()).powi(2)
            - norm(&x.sub(y).unwrap()).powi(2)
    }

    #[test]
    fn ball_projection_examples() {
        let ball = ClosedConvexSet::unit_ball(2);
        assert_eq!(ball.project(&v(&[0.3, 0.4])).unwrap(), v(&[0.3, 0.4]));
        let p = ball.project(&v(&[3.0, 4.0])).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        let off = ClosedConvexSet::ball(v(&[1.0, 1.0]), 2.0).unwrap();
        let q = off.project(&v(&[1.0, 7.0])).unwrap();
        assert_eq!(q, v(&[1.0, 3.0]));
    }

    #[test]
    fn half_space_projection_examples() {
        let h = ClosedConvexSet::half_space(v(&[1.0, 0.0]), 0.0).unwrap();
        assert_eq!(h.project(&v(&[2.0, 3.0])).unwrap(), v(&[0.0, 3.0]));
        assert_eq!(h.project(&v(&[-2.0, 3.0])).unwrap(), v(&[-2.0, 3.0]));
        // Non-unit normal uses the general closed form.
        let g = ClosedConvexSet::half_space(v(&[2.0, 0.0]), 2.0).unwrap();
        assert_eq!(g.project(&v(&[5.0, 1.0])).unwrap(), v(&[1.0, 1.0]));
    }

    #[test]
    fn invalid_sets_rejected() {
        assert!(ClosedConvexSet::ball(v(&[0.0]), 0.0).is_err());
        assert!(ClosedConvexSet::ball(v(&[0.0]), -1.0).is_err());
        assert!(ClosedConvexSet::half_space(v(&[0.0, 0.0]), 1.0).is_err());
        let bad = r#"{"kind":"ball","center":[0.0],"radius":-2.0}"#;
        assert!(serde_json::from_str::<ClosedConvexSet>(bad).is_err());
    }

    #[test]
    fn gcfs_single_halfspace_example() {
        // X = unit ball, C1 = {x1 ≤ 0}, x = (2, 0):
        // T̄(x) = P_ball((0, 0)) = (0, 0) and T(x) = (1, 0).
        let ball = ClosedConvexSet::unit_ball(2);
        let h = ClosedConvexSet::half_space(v(&[1.0, 0.0]), 0.0).unwrap();
        let x = v(&[2.0, 0.0]);
        let bar = ball.project(&h.project(&x).unwrap()).unwrap();
        assert_eq!(bar, v(&[0.0, 0.0]));
        let t = make_gcfs_operator(ball, vec![h], vec![1.0]).unwrap();
        assert_eq!(t.apply(&x).unwrap(), v(&[1.0, 0.0]));
        assert_eq!(t.residual(&x).unwrap(), 1.0);
        assert_eq!(t.residual(&v(&[-0.5, 0.5])).unwrap(), 0.0);
    }

    #[test]
    fn identity_and_weights() {
        let x = v(&[1.0, -4.0, 2.5]);
        assert_eq!(NonexpansiveOperator::Identity.apply(&x).unwrap(), x);
        let ball = ClosedConvexSet::unit_ball(2);
        let third = 1.0 / 3.0;
        let sets = vec![ball.clone(), ball.clone(), ball.clone()];
        assert!(make_gcfs_operator(ball.clone(), sets, vec![third; 3]).is_ok());
        let two = vec![ball.clone(), ball.clone()];
        assert!(make_gcfs_operator(ball.clone(), two.clone(), vec![0.5, 0.6]).is_err());
        assert!(make_gcfs_operator(ball.clone(), two.clone(), vec![1.5, -0.5]).is_err());
        assert!(make_gcfs_operator(ball.clone(), two, vec![1.0]).is_err());
        let three = ClosedConvexSet::unit_ball(3);
        assert!(make_gcfs_operator(ball, vec![three], vec![1.0]).is_err());
    }

    #[test]
    fn single_set_equal_to_bounding_fixes_members() {
        let ball = ClosedConvexSet::unit_ball(3);
        let t = make_gcfs_operator(ball.clone(), vec![ball], vec![1.0]).unwrap();
        let x = v(&[0.2, -0.3, 0.5]);
        assert_eq!(t.apply(&x).unwrap(), x);
    }

    #[test]
    fn firm_nonexpansiveness_projections_and_gcfs() {
        let mut rng = RandomSource::new(21);
        let dim = 6;
        let ball = ClosedConvexSet::ball(rng.sample_uniform(dim, -1.0, 1.0).unwrap(), 1.3).unwrap();
        let half = ClosedConvexSet::half_space(rng.sample_uniform(dim, -1.0, 1.0).unwrap(), 0.4).unwrap();
        let feasible = random_gcfs(&mut rng, dim, 3, 0.0, 1.0);
        let infeasible = random_gcfs(&mut rng, dim, 3, -3.0, -2.0);
        let ops = [
            NonexpansiveOperator::projection(ball),
            NonexpansiveOperator::projection(half),
            feasible,
            infeasible,
        ];
        for op in &ops {
            for _ in 0..1000 {
                let x = rng.sample_uniform(dim, -4.0, 4.0).unwrap();
                let y = rng.sample_uniform(dim, -4.0, 4.0).unwrap();
                assert!(firm_gap(op, &x, &y) <= 1e-9);
                let d = norm(&op.apply(&x).unwrap().sub(&op.apply(&y).unwrap()).unwrap());
                assert!(d <= norm(&x.sub(&y).unwrap()) + 1e-12);
                let rd = (op.residual(&x).unwrap() - op.residual(&y).unwrap()).abs();
                assert!(rd <= 2.0 * norm(&x.sub(&y).unwrap()) + 1e-12);
            }
        }
    }

    #[test]
    fn projection_idempotent_and_membership() {
        let mut rng = RandomSource::new(22);
        for _ in 0..500 {
            let dim = 4;
            let sets = [
                ClosedConvexSet::ball(rng.sample_uniform(dim, -1.0, 1.0).unwrap(), rng.uniform(0.1, 2.0))
                    .unwrap(),
                ClosedConvexSet::half_space(rng.sample_uniform(dim, -1.0, 1.0).unwrap(), rng.uniform(-1.0, 1.0))
                    .unwrap(),
            ];
            let x = rng.sample_uniform(dim, -3.0, 3.0).unwrap();
            for s in &sets {
                let p = s.project(&x).unwrap();
                let pp = s.project(&p).unwrap();
                assert!(norm(&pp.sub(&p).unwrap()) <= 1e-12);
                let fixed = norm(&p.sub(&x).unwrap()) <= 1e-12;
                assert_eq!(fixed, s.contains(&x, 1e-12).unwrap());
                assert!(s.contains(&p, MEMBERSHIP_TOL).unwrap());
            }
        }
    }

    #[test]
    fn feasible_intersection_points_are_fixed() {
        let mut rng = RandomSource::new(23);
        let dim = 5;
        let t = random_gcfs(&mut rng, dim, 3, 0.0, 1.0);
        let NonexpansiveOperator::HalfAveraged { inner } = &t else { unreachable!() };
        let NonexpansiveOperator::Compose { inner: avg, .. } = inner.as_ref() else { unreachable!() };
        let NonexpansiveOperator::WeightedAverage { ops, .. } = avg.as_ref() else { unreachable!() };
        let mut checked = 0;
        while checked < 200 {
            let x = rng.sample_uniform(dim, -1.0, 1.0).unwrap();
            let inside = norm(&x) <= 1.0
                && ops.iter().all(|o| match o {
                    NonexpansiveOperator::Projection { set } => set.contains(&x, 0.0).unwrap(),
                    _ => false,
                });
            if inside {
                assert!(t.residual(&x).unwrap() <= MEMBERSHIP_TOL);
                checked += 1;
            }
        }
    }

    #[test]
    fn operator_tree_serde_round_trip() {
        let mut rng = RandomSource::new(24);
        let t = random_gcfs(&mut rng, 4, 3, 0.0, 1.0);
        let s = serde_json::to_string(&t).unwrap();
        let back: NonexpansiveOperator = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        back.validate().unwrap();
        let bad = NonexpansiveOperator::WeightedAverage {
            ops: vec![NonexpansiveOperator::Identity],
            weights: vec![0.9],
        };
        assert!(bad.validate().is_err());
    }
}
