//! Incremental proximal point methods for minimizing a sum of nonsmooth
//! convex functions over the intersection of fixed point sets of firmly
//! nonexpansive mappings.
//!
//! A networked problem has `I` users; user `i` privately holds a convex
//! objective `f_i` with a cheap proximity operator and a firmly nonexpansive
//! mapping `T_i`. The goal is
//!
//! ```text
//! minimize  Σ_i f_i(x)   subject to   x ∈ ⋂_i Fix(T_i)
//! ```
//!
//! Four solvers are provided in [`solvers`]: a Halpern-type and a
//! Krasnosel'skii–Mann-type incremental proximal method, and the incremental
//! and parallel subgradient baselines. [`bench`] generates random weighted-L1
//! instances with half-space/ball constraint structure and runs multi-sample
//! comparisons.

// Negated comparisons such as `!(x > 0.0)` are used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod functions;
pub mod operators;
pub mod schedules;
pub mod solvers;
pub mod vecspace;

pub use error::{Error, Result};
pub use functions::{ProximableFunction, WeightedShiftedL1};
pub use operators::{make_gcfs_operator, ClosedConvexSet, NonexpansiveOperator};
pub use schedules::{Constant, PowerLaw, ScheduleMode, Validation};
pub use solvers::{NetworkProblem, RunTrace, SolverOptions, UserOrder, UserProblem};
pub use vecspace::{RandomSource, Vector};
