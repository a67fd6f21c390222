//! The four iterative methods over a [`NetworkProblem`].
//!
//! One outer iteration `n` maps `x_n` to `x_{n+1}`. The incremental methods
//! sweep the users in sequence, `x_n^(0) = x_n`, user `i` reading
//! `x_n^(i-1)` and producing `x_n^(i)`, and `x_{n+1} = x_n^(I)`:
//!
//! | method  | `y_n^(i)`                         | `x_n^(i)`                                   |
//! |---------|-----------------------------------|---------------------------------------------|
//! | Halpern | `prox_{γ_n f_i}(x_n^(i-1))`       | `P_X[α_n u_i + (1 − α_n) T_i(y)]`           |
//! | KM      | `prox_{γ_n f_i}(x_n^(i-1))`       | `P_X[α_n x_n^(i-1) + (1 − α_n) T_i(y)]`     |
//! | ISM     | `x_n^(i-1) − γ_n g_i(x_n^(i-1))`  | `P_X[α_n x_n^(i-1) + (1 − α_n) T_i(y)]`     |
//!
//! where `u_i` is user `i`'s anchor, `g_i` a subgradient of `f_i`, and `P_X`
//! the projection onto the user's optional bounding set (skipped when the
//! user has none). PSM instead lets every user read `x_n` and averages:
//! `x_{n+1} = (1/I) Σ_i P_X[t x_n + (1 − t) T_i(x_n − γ_n g_i(x_n))]`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::ProximableFunction;
use crate::operators::{ClosedConvexSet, NonexpansiveOperator};
use crate::schedules::{validate_halpern, validate_km, AlphaRule, Constant, PowerLaw, SchedulePair, StepSequence};
use crate::vecspace::{combine_raw, dist_sq_raw, RandomSource, Vector};

/// Slack allowed on the per-iteration inequality monitors.
pub const MONITOR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProblem {
    pub f: ProximableFunction,
    pub op: NonexpansiveOperator,
    /// Halpern anchor; ignored by the other methods.
    pub anchor: Vector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounding: Option<ClosedConvexSet>,
}

impl UserProblem {
    pub fn new(
        f: ProximableFunction,
        op: NonexpansiveOperator,
        anchor: Vector,
        bounding: Option<ClosedConvexSet>,
    ) -> Result<Self> {
        let u = UserProblem {
            f,
            op,
            anchor,
            bounding,
        };
        u.validate()?;
        Ok(u)
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    fn validate(&self) -> Result<()> {
        let dim = self.dim();
        self.op.validate()?;
        if let Some(d) = self.op.dim() {
            if d != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: d,
                });
            }
        }
        self.anchor.check_dim(dim)?;
        if let Some(b) = &self.bounding {
            if b.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: b.dim(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork")]
pub struct NetworkProblem {
    users: Vec<UserProblem>,
    dim: usize,
}

#[derive(Deserialize)]
struct RawNetwork {
    users: Vec<UserProblem>,
}

impl TryFrom<RawNetwork> for NetworkProblem {
    type Error = Error;

    fn try_from(raw: RawNetwork) -> Result<Self> {
        NetworkProblem::new(raw.users)
    }
}

impl NetworkProblem {
    pub fn new(users: Vec<UserProblem>) -> Result<Self> {
        let first = users
            .first()
            .ok_or_else(|| Error::usage("a network needs at least one user"))?;
        let dim = first.dim();
        for u in &users {
            u.validate()?;
            if u.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: u.dim(),
                });
            }
        }
        Ok(NetworkProblem { users, dim })
    }

    pub fn users(&self) -> &[UserProblem] {
        &self.users
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// `Σ_i f_i(x)`.
    pub fn objective(&self, x: &Vector) -> Result<f64> {
        x.check_dim(self.dim)?;
        Ok(self.objective_slice(x.as_slice()))
    }

    /// `Σ_i ‖x − T_i(x)‖`.
    pub fn residual(&self, x: &Vector) -> Result<f64> {
        x.check_dim(self.dim)?;
        let mut scratch = vec![0.0; self.dim];
        Ok(self.residual_slice(x.as_slice(), &mut scratch))
    }

    fn objective_slice(&self, x: &[f64]) -> f64 {
        self.users.iter().map(|u| u.f.eval_slice(x)).sum()
    }

    fn residual_slice(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        self.users
            .iter()
            .map(|u| u.op.residual_slice(x, scratch))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Halpern,
    Km,
    Ism,
    Psm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Halpern, Algorithm::Km, Algorithm::Ism, Algorithm::Psm];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Halpern => "halpern",
            Algorithm::Km => "km",
            Algorithm::Ism => "ism",
            Algorithm::Psm => "psm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "halpern" => Ok(Algorithm::Halpern),
            "km" => Ok(Algorithm::Km),
            "ism" => Ok(Algorithm::Ism),
            "psm" => Ok(Algorithm::Psm),
            other => Err(Error::usage(format!(
                "unknown algorithm '{other}' (expected halpern, km, ism or psm)"
            ))),
        }
    }

    fn is_incremental(self) -> bool {
        self != Algorithm::Psm
    }

    fn uses_prox(self) -> bool {
        matches!(self, Algorithm::Halpern | Algorithm::Km)
    }
}

/// Order in which the incremental methods visit users within a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UserOrder {
    Fixed,
    /// Fresh random permutation at every outer iteration.
    ShuffledPerIteration { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub record_trace: bool,
    pub monitor_inequalities: bool,
    /// A point known to lie in `⋂ Fix(T_i)`; required by the monitors.
    pub reference_point: Option<Vector>,
    pub user_order: UserOrder,
}

impl SolverOptions {
    pub fn new(max_iters: usize) -> Self {
        SolverOptions {
            max_iters,
            record_trace: false,
            monitor_inequalities: false,
            reference_point: None,
            user_order: UserOrder::Fixed,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn with_monitors(mut self, reference: Vector) -> Self {
        self.monitor_inequalities = true;
        self.reference_point = Some(reference);
        self
    }

    pub fn with_order(mut self, order: UserOrder) -> Self {
        self.user_order = order;
        self
    }
}

/// Inequality gaps observed during outer iteration `iteration`.
///
/// `prox_gap` is the largest violation, over the users of the sweep, of
/// `‖y − z‖² ≤ ‖x − z‖² − ‖x − y‖² + 2γ(f(z) − f(y))` for `y = prox_{γf}(x)`.
/// `sweep_gap` (KM only) is the violation of the per-iteration descent
/// inequality
/// `‖x_{n+1} − z‖² ≤ ‖x_n − z‖² − (1 − α)Σ_i(‖x^(i-1) − y^(i)‖² + ‖y^(i) − T_i y^(i)‖²)
///  + 2(1 − α)γ Σ_i(f_i(z) − f_i(y^(i)))`.
/// Both must stay below [`MONITOR_TOL`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub iteration: usize,
    pub prox_gap: f64,
    pub sweep_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    /// `Σ_i f_i(x_n)` for `n = 0..=max_iters`.
    pub objective: Vec<f64>,
    /// `Σ_i ‖x_n − T_i(x_n)‖` for `n = 0..=max_iters`.
    pub residual: Vec<f64>,
    /// Cumulative solver time in seconds when `x_n` became available.
    pub time_s: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterates: Option<Vec<Vector>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub monitors: Vec<MonitorRecord>,
    pub final_iterate: Vector,
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.objective.len() - 1
    }

    /// Largest monitor gap seen over the run, if monitors were enabled.
    pub fn max_monitor_gap(&self) -> Option<f64> {
        self.monitors
            .iter()
            .map(|m| m.prox_gap.max(m.sweep_gap.unwrap_or(f64::NEG_INFINITY)))
            .reduce(f64::max)
    }
}

pub fn run_halpern(
    p: &NetworkProblem,
    gamma: &PowerLaw,
    alpha: &PowerLaw,
    x0: &Vector,
    opts: &SolverOptions,
) -> Result<RunTrace> {
    validate_halpern(gamma, alpha).into_result()?;
    run_unchecked(Algorithm::Halpern, p, gamma, alpha, x0, opts)
}

pub fn run_km(
    p: &NetworkProblem,
    gamma: &PowerLaw,
    alpha: &Constant,
    x0: &Vector,
    opts: &SolverOptions,
) -> Result<RunTrace> {
    validate_km(gamma, alpha).into_result()?;
    run_unchecked(Algorithm::Km, p, gamma, alpha, x0, opts)
}

pub fn run_ism(
    p: &NetworkProblem,
    gamma: &PowerLaw,
    alpha: &Constant,
    x0: &Vector,
    opts: &SolverOptions,
) -> Result<RunTrace> {
    validate_km(gamma, alpha).into_result()?;
    run_unchecked(Algorithm::Ism, p, gamma, alpha, x0, opts)
}

pub fn run_psm(
    p: &NetworkProblem,
    gamma: &PowerLaw,
    alpha: &Constant,
    x0: &Vector,
    opts: &SolverOptions,
) -> Result<RunTrace> {
    validate_km(gamma, alpha).into_result()?;
    run_unchecked(Algorithm::Psm, p, gamma, alpha, x0, opts)
}

/// Runs `alg` with a validated schedule pair; Halpern needs a Halpern pair and
/// the other three a KM pair.
pub fn run(
    alg: Algorithm,
    p: &NetworkProblem,
    schedule: &SchedulePair,
    x0: &Vector,
    opts: &SolverOptions,
) -> Result<RunTrace> {
    match (alg, schedule.alpha) {
        (Algorithm::Halpern, AlphaRule::PowerLaw(a)) => run_halpern(p, &schedule.gamma, &a, x0, opts),
        (Algorithm::Km, AlphaRule::Constant(t)) => run_km(p, &schedule.gamma, &t, x0, opts),
        (Algorithm::Ism, AlphaRule::Constant(t)) => run_ism(p, &schedule.gamma, &t, x0, opts),
        (Algorithm::Psm, AlphaRule::Constant(t)) => run_psm(p, &schedule.gamma, &t, x0, opts),
        (alg, _) => Err(Error::usage(format!(
            "schedule kind does not match algorithm {}",
            alg.name()
        ))),
    }
}

/// Runs `alg` without checking the step sizes against the admissible
/// ranges. This is the hook for degenerate regimes such as `α ≡ 0` or
/// `γ ≡ 0`; production callers should use the validated entry points.
pub fn run_unchecked(
    alg: Algorithm,
    p: &NetworkProblem,
    gamma: &dyn StepSequence,
    alpha: &dyn StepSequence,
    x0: &Vector,
    opts: &SolverOptions,
) -> Result<RunTrace> {
    x0.check_dim(p.dim)?;
    let reference = if opts.monitor_inequalities {
        let z = opts
            .reference_point
            .as_ref()
            .ok_or_else(|| Error::usage("inequality monitors need a reference point"))?;
        z.check_dim(p.dim)?;
        Some(z)
    } else {
        None
    };

    let dim = p.dim;
    let iters = opts.max_iters;
    let mut ws = Workspace::new(dim, p.num_users());
    let mut x = x0.as_slice().to_vec();
    let mut next = vec![0.0; dim];
    let mut order: Vec<usize> = (0..p.num_users()).collect();
    let mut shuffler = match opts.user_order {
        UserOrder::ShuffledPerIteration { seed } if alg.is_incremental() => Some(RandomSource::new(seed)),
        _ => None,
    };

    let mut objective = Vec::with_capacity(iters + 1);
    let mut residual = Vec::with_capacity(iters + 1);
    let mut time_s = Vec::with_capacity(iters + 1);
    let mut iterates = opts.record_trace.then(|| Vec::with_capacity(iters + 1));
    let mut monitors = Vec::new();

    objective.push(p.objective_slice(&x));
    residual.push(p.residual_slice(&x, &mut ws.scratch));
    time_s.push(0.0);
    if let Some(it) = iterates.as_mut() {
        it.push(Vector::from_raw(x.clone()));
    }

    let mut elapsed = 0.0;
    for n in 0..iters {
        let g = gamma.at(n);
        let a = alpha.at(n);
        if let Some(rng) = shuffler.as_mut() {
            order = rng.permutation(p.num_users());
        }
        let start = Instant::now();
        let record = if alg.is_incremental() {
            incremental_sweep(alg, p, &order, g, a, &x, &mut next, &mut ws, reference, n)?
        } else {
            parallel_step(p, g, a, &x, &mut next, &mut ws, n)?;
            None
        };
        elapsed += start.elapsed().as_secs_f64();
        std::mem::swap(&mut x, &mut next);

        objective.push(p.objective_slice(&x));
        residual.push(p.residual_slice(&x, &mut ws.scratch));
        time_s.push(elapsed);
        if let Some(it) = iterates.as_mut() {
            it.push(Vector::from_raw(x.clone()));
        }
        if let Some(r) = record {
            monitors.push(r);
        }
    }

    Ok(RunTrace {
        algorithm: alg,
        objective,
        residual,
        time_s,
        iterates,
        monitors,
        final_iterate: Vector::from_raw(x),
    })
}

struct Workspace {
    cur: Vec<f64>,
    y: Vec<f64>,
    ty: Vec<f64>,
    scratch: Vec<f64>,
    contributions: Vec<Vec<f64>>,
    column: Vec<f64>,
}

impl Workspace {
    fn new(dim: usize, users: usize) -> Self {
        Workspace {
            cur: vec![0.0; dim],
            y: vec![0.0; dim],
            ty: vec![0.0; dim],
            scratch: vec![0.0; dim],
            contributions: vec![vec![0.0; dim]; users],
            column: Vec::with_capacity(users),
        }
    }
}

fn subgradient_step(f: &ProximableFunction, gamma: f64, x: &[f64], out: &mut [f64], g: &mut [f64]) {
    f.subgrad_into(x, g);
    for ((o, xj), gj) in out.iter_mut().zip(x).zip(g.iter()) {
        *o = xj - gamma * gj;
    }
}

#[allow(clippy::too_many_arguments)]
fn incremental_sweep(
    alg: Algorithm,
    p: &NetworkProblem,
    order: &[usize],
    gamma: f64,
    alpha: f64,
    x: &[f64],
    out: &mut [f64],
    ws: &mut Workspace,
    reference: Option<&Vector>,
    n: usize,
) -> Result<Option<MonitorRecord>> {
    let monitor = reference.filter(|_| alg.uses_prox());
    let mut prox_gap = f64::NEG_INFINITY;
    let mut descent_terms = 0.0;
    let mut value_terms = 0.0;

    ws.cur.copy_from_slice(x);
    for &i in order {
        let user = &p.users[i];
        if alg.uses_prox() {
            user.f.prox_into(gamma, &ws.cur, &mut ws.y);
        } else {
            subgradient_step(&user.f, gamma, &ws.cur, &mut ws.y, &mut ws.scratch);
        }
        user.op.apply_into(&ws.y, &mut ws.ty);

        if let Some(z) = monitor {
            let z = z.as_slice();
            let step_sq = dist_sq_raw(&ws.cur, &ws.y);
            let value = user.f.eval_slice(z) - user.f.eval_slice(&ws.y);
            let gap = dist_sq_raw(&ws.y, z) - dist_sq_raw(&ws.cur, z) + step_sq - 2.0 * gamma * value;
            prox_gap = prox_gap.max(gap);
            descent_terms += step_sq + dist_sq_raw(&ws.y, &ws.ty);
            value_terms += value;
        }

        let base = match alg {
            Algorithm::Halpern => user.anchor.as_slice(),
            _ => &ws.cur,
        };
        let mut updated = combine_raw(alpha, base, &ws.ty);
        if let Some(b) = &user.bounding {
            b.project_in_place(&mut updated);
        }
        if !updated.iter().all(|c| c.is_finite()) {
            return Err(Error::NumericFailure {
                iteration: n,
                user: i,
                sample: None,
            });
        }
        ws.cur = updated;
    }
    out.copy_from_slice(&ws.cur);

    Ok(monitor.map(|z| {
        let z = z.as_slice();
        let sweep_gap = (alg == Algorithm::Km).then(|| {
            let beta = 1.0 - alpha;
            dist_sq_raw(out, z) - dist_sq_raw(x, z) + beta * descent_terms - 2.0 * beta * gamma * value_terms
        });
        MonitorRecord {
            iteration: n,
            prox_gap,
            sweep_gap,
        }
    }))
}

fn parallel_step(
    p: &NetworkProblem,
    gamma: f64,
    t: f64,
    x: &[f64],
    out: &mut [f64],
    ws: &mut Workspace,
    n: usize,
) -> Result<()> {
    for (i, user) in p.users.iter().enumerate() {
        subgradient_step(&user.f, gamma, x, &mut ws.y, &mut ws.scratch);
        user.op.apply_into(&ws.y, &mut ws.ty);
        let mut contrib = combine_raw(t, x, &ws.ty);
        if let Some(b) = &user.bounding {
            b.project_in_place(&mut contrib);
        }
        if !contrib.iter().all(|c| c.is_finite()) {
            return Err(Error::NumericFailure {
                iteration: n,
                user: i,
                sample: None,
            });
        }
        ws.contributions[i] = contrib;
    }
    // Summing each coordinate in sorted order makes the average independent
    // of the order in which users are listed.
    let count = p.num_users() as f64;
    for j in 0..out.len() {
        ws.column.clear();
        ws.column.extend(ws.contributions.iter().map(|c| c[j]));
        ws.column.sort_unstable_by(f64::total_cmp);
        out[j] = ws.column.iter().sum::<f64>() / count;
    }
    Ok(())
}
