//! Random weighted-L1 benchmark instances and the multi-sample driver.
//!
//! Every user `i` holds `f_i(x) = Σ_j ω_ij |x_j − a_ij|` and the operator
//! `T_i = ½(Id + P_C Σ_k (1/K) P_{C_ik})` with `C` the unit ball and
//! `C_ik = {x : ⟨c_ik, x⟩ ≤ d_ik}`, `‖c_ik‖ = 1`. Two regimes:
//!
//! * feasible: `d_ik ∈ [0, 1]`, so the origin lies in every `C_ik` and in `C`;
//! * infeasible: one operator shared by all users with `d_k` drawn from
//!   `infeasible_offsets` (default `[−3, −2]`); offsets below −1 make every
//!   half-space miss the unit ball.
//!
//! [`run_benchmark`] averages the per-iteration objective and residual sums
//! over samples into the `F_n` and `D_n` series and locates the first `n`
//! where consecutive values differ by less than the stopping tolerances.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::WeightedShiftedL1;
use crate::operators::{make_gcfs_operator, ClosedConvexSet, NonexpansiveOperator};
use crate::schedules::{Constant, PowerLaw, SchedulePair};
use crate::solvers::{self, Algorithm, NetworkProblem, RunTrace, SolverOptions, UserProblem};
use crate::vecspace::{RandomSource, Vector};

/// Lower end of the weight distribution; weights are uniform on `[ε, 1]`.
pub const WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Feasible,
    Infeasible,
}

impl Regime {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "feasible" => Ok(Regime::Feasible),
            "infeasible" => Ok(Regime::Infeasible),
            other => Err(Error::usage(format!(
                "unknown regime '{other}' (expected feasible or infeasible)"
            ))),
        }
    }
}

/// The two step-size variants of the benchmark:
/// (i) `γ_n = c/(n+1)^{1/4}`, Halpern `α_n = c'/(n+1)^{1/2}`;
/// (ii) `γ_n = c/(n+1)^{1/8}`, Halpern `α_n = c'/(n+1)^{3/4}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleVariant {
    I,
    Ii,
}

impl ScheduleVariant {
    pub const ALL: [ScheduleVariant; 2] = [ScheduleVariant::I, ScheduleVariant::Ii];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleVariant::I => "i",
            ScheduleVariant::Ii => "ii",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "i" => Ok(ScheduleVariant::I),
            "ii" => Ok(ScheduleVariant::Ii),
            other => Err(Error::usage(format!(
                "unknown schedule variant '{other}' (expected i or ii)"
            ))),
        }
    }

    pub fn gamma_exponent(self) -> f64 {
        match self {
            ScheduleVariant::I => 0.25,
            ScheduleVariant::Ii => 0.125,
        }
    }

    pub fn alpha_exponent(self) -> f64 {
        match self {
            ScheduleVariant::I => 0.5,
            ScheduleVariant::Ii => 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub dim: usize,
    pub users: usize,
    pub sets: usize,
    pub samples: usize,
    pub max_iters: usize,
    pub regime: Regime,
    pub algorithms: Vec<(Algorithm, ScheduleVariant)>,
    pub seed: u64,
    pub stop_f_tol: f64,
    pub stop_d_tol: f64,
    pub gamma_scale: f64,
    /// Scale of the Halpern `α_n`.
    pub alpha_scale: f64,
    /// Constant relaxation `t` of KM, ISM and PSM.
    pub alpha_const: f64,
    /// Run the inequality monitors (feasible regime only, reference = origin).
    pub monitor: bool,
    pub jobs: usize,
    /// Range of the half-space offsets `d_k` in the infeasible regime. Both
    /// ends must lie below −1 so every half-space misses the unit ball.
    #[serde(default = "default_infeasible_offsets")]
    pub infeasible_offsets: (f64, f64),
}

fn default_infeasible_offsets() -> (f64, f64) {
    (-3.0, -2.0)
}

impl BenchConfig {
    fn preset(regime: Regime, seed: u64) -> Self {
        let algorithms = Algorithm::ALL
            .iter()
            .flat_map(|&a| ScheduleVariant::ALL.iter().map(move |&v| (a, v)))
            .collect();
        BenchConfig {
            dim: 100,
            users: 10,
            sets: 3,
            samples: 100,
            max_iters: 2000,
            regime,
            algorithms,
            seed,
            stop_f_tol: 1e-3,
            stop_d_tol: 1e-6,
            gamma_scale: 1e-3,
            alpha_scale: 1e-3,
            alpha_const: 0.5,
            monitor: regime == Regime::Feasible,
            jobs: 1,
            infeasible_offsets: default_infeasible_offsets(),
        }
    }

    /// Feasible regime, `N = 100`, `I = 10`, `K = 3`, 100 samples, 2000
    /// iterations, all four methods under both schedule variants.
    pub fn table1(seed: u64) -> Self {
        Self::preset(Regime::Feasible, seed)
    }

    /// As [`BenchConfig::table1`] but in the infeasible regime.
    pub fn table2(seed: u64) -> Self {
        Self::preset(Regime::Infeasible, seed)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dimension", self.dim),
            ("users", self.users),
            ("sets", self.sets),
            ("samples", self.samples),
            ("jobs", self.jobs),
        ] {
            if v == 0 {
                return Err(Error::usage(format!("{name} must be at least 1")));
            }
        }
        if !(self.stop_f_tol > 0.0) || !(self.stop_d_tol > 0.0) {
            return Err(Error::usage("stopping tolerances must be positive"));
        }
        let (lo, hi) = self.infeasible_offsets;
        if !(lo <= hi && hi < -1.0) || !lo.is_finite() {
            return Err(Error::usage(
                "infeasible offsets must satisfy lo ≤ hi < −1",
            ));
        }
        if self.algorithms.is_empty() {
            return Err(Error::usage("no algorithms selected"));
        }
        for &(alg, variant) in &self.algorithms {
            self.schedule(alg, variant)?;
        }
        Ok(())
    }

    pub fn schedule(&self, alg: Algorithm, variant: ScheduleVariant) -> Result<SchedulePair> {
        let gamma = PowerLaw::new(self.gamma_scale, variant.gamma_exponent())?;
        match alg {
            Algorithm::Halpern => SchedulePair::halpern(gamma, PowerLaw::new(self.alpha_scale, variant.alpha_exponent())?),
            _ => SchedulePair::km(gamma, Constant::new(self.alpha_const)?),
        }
    }
}

fn root_source(cfg: &BenchConfig) -> RandomSource {
    RandomSource::new(cfg.seed)
}

fn random_half_spaces(rng: &mut RandomSource, dim: usize, count: usize, lo: f64, hi: f64) -> Vec<ClosedConvexSet> {
    (0..count)
        .map(|_| {
            let c = rng.unit_direction(dim);
            let d = rng.uniform(lo, hi);
            ClosedConvexSet::half_space(c, d).expect("unit normal is nonzero")
        })
        .collect()
}

fn gcfs(dim: usize, sets: Vec<ClosedConvexSet>) -> NonexpansiveOperator {
    let k = sets.len();
    make_gcfs_operator(ClosedConvexSet::unit_ball(dim), sets, vec![1.0 / k as f64; k]).expect("uniform weights are valid")
}

/// Builds sample `sample`'s instance; deterministic in `(cfg.seed, sample)`.
pub fn generate_instance(cfg: &BenchConfig, sample: usize) -> NetworkProblem {
    let dim = cfg.dim;
    let src = root_source(cfg).derive("instance", sample as u64);
    let shared = match cfg.regime {
        Regime::Infeasible => {
            let mut rng = src.derive("shared-operator", 0);
            let (lo, hi) = cfg.infeasible_offsets;
            Some(gcfs(dim, random_half_spaces(&mut rng, dim, cfg.sets, lo, hi)))
        }
        Regime::Feasible => None,
    };
    let users = (0..cfg.users)
        .map(|i| {
            let mut rng = src.derive("user", i as u64);
            let weights = rng.sample_uniform(dim, WEIGHT_FLOOR, 1.0).expect("valid bounds");
            let shifts = rng.sample_uniform(dim, -3.0, 3.0).expect("valid bounds");
            let f = WeightedShiftedL1::new(weights, shifts).expect("positive weights").into();
            let op = match &shared {
                Some(op) => op.clone(),
                None => gcfs(dim, random_half_spaces(&mut rng, dim, cfg.sets, 0.0, 1.0)),
            };
            let anchor = rng.sample_uniform(dim, -1.0, 1.0).expect("valid bounds");
            UserProblem::new(f, op, anchor, Some(ClosedConvexSet::unit_ball(dim))).expect("consistent dimensions")
        })
        .collect();
    NetworkProblem::new(users).expect("at least one user")
}

/// Seed of the source that draws sample `sample`'s initial point.
pub fn initial_point_seed(cfg: &BenchConfig, sample: usize) -> u64 {
    root_source(cfg).derive("x0", sample as u64).seed()
}

/// Uniform draw from `[−1, 1]^dim` using the given seed.
pub fn initial_point_from_seed(seed: u64, dim: usize) -> Vector {
    RandomSource::new(seed).sample_uniform(dim, -1.0, 1.0).expect("valid bounds")
}

pub fn initial_point(cfg: &BenchConfig, sample: usize) -> Vector {
    initial_point_from_seed(initial_point_seed(cfg, sample), cfg.dim)
}

/// Self-describing replay file for one benchmark sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub seed: u64,
    pub sample: usize,
    pub regime: Regime,
    pub dim: usize,
    pub x0_seed: u64,
    pub x0: Vector,
    pub problem: NetworkProblem,
}

impl InstanceFile {
    pub fn for_sample(cfg: &BenchConfig, sample: usize) -> Self {
        InstanceFile {
            seed: cfg.seed,
            sample,
            regime: cfg.regime,
            dim: cfg.dim,
            x0_seed: initial_point_seed(cfg, sample),
            x0: initial_point(cfg, sample),
            problem: generate_instance(cfg, sample),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let inst: InstanceFile = serde_json::from_str(&text)?;
        inst.x0.check_dim(inst.problem.dim())?;
        Ok(inst)
    }
}

/// Smallest `n ≥ 1` with `|series[n−1] − series[n]| < tol`.
pub fn detect_stop(series: &[f64], tol: f64) -> Result<Option<usize>> {
    if series.len() < 2 {
        return Err(Error::usage("stopping detection needs at least two values"));
    }
    if !(tol > 0.0) {
        return Err(Error::usage("stopping tolerance must be positive"));
    }
    Ok(series.windows(2).position(|w| (w[0] - w[1]).abs() < tol).map(|k| k + 1))
}

/// Where a stopping criterion fired, or the cap if it never did.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopHit {
    /// `None` means the criterion never held up to the cap.
    pub n: Option<usize>,
    /// Mean cumulative solver time at the reported index.
    pub time_s: f64,
    /// Series value at the reported index.
    pub value: f64,
}

impl StopHit {
    fn locate(series: &[f64], time: &[f64], tol: f64) -> Self {
        let n = if series.len() < 2 {
            None
        } else {
            detect_stop(series, tol).expect("checked length and tolerance")
        };
        let idx = n.unwrap_or(series.len() - 1);
        StopHit {
            n,
            time_s: time[idx],
            value: series[idx],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmReport {
    pub algorithm: Algorithm,
    pub variant: ScheduleVariant,
    pub f_series: Vec<f64>,
    pub d_series: Vec<f64>,
    pub time_series: Vec<f64>,
    pub stop_f: StopHit,
    pub stop_d: StopHit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_monitor_gap: Option<f64>,
}

impl AlgorithmReport {
    pub fn label(&self) -> String {
        format!("{}({})", self.algorithm.name(), self.variant.name())
    }

    pub fn final_f(&self) -> f64 {
        *self.f_series.last().expect("nonempty series")
    }

    pub fn final_d(&self) -> f64 {
        *self.d_series.last().expect("nonempty series")
    }
}

/// Per-sample objective and residual sums for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSeries {
    pub algorithm: Algorithm,
    pub variant: ScheduleVariant,
    pub objective: Vec<f64>,
    pub residual: Vec<f64>,
    pub time_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    /// All methods share each sample's instance and initial point.
    pub paired_samples: bool,
    pub rows: Vec<AlgorithmReport>,
    /// Indexed by sample, then in `config.algorithms` order.
    #[serde(skip)]
    pub per_sample: Vec<Vec<SampleSeries>>,
}

impl BenchReport {
    pub fn row(&self, alg: Algorithm, variant: ScheduleVariant) -> Option<&AlgorithmReport> {
        self.rows.iter().find(|r| r.algorithm == alg && r.variant == variant)
    }

    pub const CSV_HEADER: &'static str = "algorithm,variant,n_F,time_F_s,F_n,n_D,time_D_s,D_n";

    pub fn to_csv(&self) -> String {
        let cap = self.config.max_iters;
        let fmt_n = |n: Option<usize>| match n {
            Some(n) => n.to_string(),
            None => format!(">={cap}"),
        };
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:.6},{},{},{:.6},{}",
                r.algorithm.name(),
                r.variant.name(),
                fmt_n(r.stop_f.n),
                r.stop_f.time_s,
                r.stop_f.value,
                fmt_n(r.stop_d.n),
                r.stop_d.time_s,
                r.stop_d.value,
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}

fn run_sample(cfg: &BenchConfig, sample: usize) -> Result<(Vec<SampleSeries>, Vec<Option<f64>>)> {
    let problem = generate_instance(cfg, sample);
    let x0 = initial_point(cfg, sample);
    let mut opts = SolverOptions::new(cfg.max_iters);
    if cfg.monitor && cfg.regime == Regime::Feasible {
        opts = opts.with_monitors(Vector::zeros(cfg.dim));
    }
    let mut series = Vec::with_capacity(cfg.algorithms.len());
    let mut gaps = Vec::with_capacity(cfg.algorithms.len());
    for &(alg, variant) in &cfg.algorithms {
        let schedule = cfg.schedule(alg, variant)?;
        let trace: RunTrace = solvers::run(alg, &problem, &schedule, &x0, &opts).map_err(|e| match e {
            Error::NumericFailure { iteration, user, .. } => Error::NumericFailure {
                iteration,
                user,
                sample: Some(sample),
            },
            other => other,
        })?;
        gaps.push(trace.max_monitor_gap());
        series.push(SampleSeries {
            algorithm: alg,
            variant,
            objective: trace.objective,
            residual: trace.residual,
            time_s: trace.time_s,
        });
    }
    Ok((series, gaps))
}

/// Averages over samples, summing in sample order.
pub fn average_series<'a>(series: impl Iterator<Item = &'a [f64]>, samples: usize) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    for s in series {
        if acc.is_empty() {
            acc = vec![0.0; s.len()];
        }
        for (a, v) in acc.iter_mut().zip(s) {
            *a += v;
        }
    }
    acc.iter().map(|a| a / samples as f64).collect()
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::usage(format!("cannot start worker pool: {e}")))?;
    let results: Vec<(Vec<SampleSeries>, Vec<Option<f64>>)> =
        pool.install(|| (0..cfg.samples).into_par_iter().map(|s| run_sample(cfg, s)).collect::<Result<_>>())?;

    let rows = cfg
        .algorithms
        .iter()
        .enumerate()
        .map(|(k, &(algorithm, variant))| {
            let f_series = average_series(results.iter().map(|r| r.0[k].objective.as_slice()), cfg.samples);
            let d_series = average_series(results.iter().map(|r| r.0[k].residual.as_slice()), cfg.samples);
            let time_series = average_series(results.iter().map(|r| r.0[k].time_s.as_slice()), cfg.samples);
            let max_monitor_gap = results.iter().filter_map(|r| r.1[k]).reduce(f64::max);
            AlgorithmReport {
                algorithm,
                variant,
                stop_f: StopHit::locate(&f_series, &time_series, cfg.stop_f_tol),
                stop_d: StopHit::locate(&d_series, &time_series, cfg.stop_d_tol),
                f_series,
                d_series,
                time_series,
                max_monitor_gap,
            }
        })
        .collect();

    Ok(BenchReport {
        config: cfg.clone(),
        paired_samples: true,
        rows,
        per_sample: results.into_iter().map(|r| r.0).collect(),
    })
}

/// Upper bound on grid points visited by [`oracle_solve`].
pub const ORACLE_MAX_GRID_POINTS: u64 = 200_000_000;

const ORACLE_REFINE_ITERS: usize = 200;
const ORACLE_PULL_ITERS: usize = 20_000;

/// Brute-force minimizer of `Σ_i f_i` over `⋂_i Fix(T_i)` for `dim ≤ 3`.
///
/// A grid pass over the box `[lo, hi]` keeps the best point whose residuals
/// `‖x − T_i(x)‖` are all at most `10·step`. That point is pulled onto the
/// common fixed point set by iterating the operator sweep until every
/// residual is at most `step/100`, then refined by 200 rounds of pattern
/// search over the directions `{−1, 0, 1}^N \ {0}` with step lengths from
/// `step` down to `step/100`; each trial point is pulled back the same way.
pub fn oracle_solve(p: &NetworkProblem, lo: &Vector, hi: &Vector, step: f64) -> Result<(Vector, f64)> {
    let dim = p.dim();
    if dim > 3 {
        return Err(Error::usage(format!(
            "the brute-force oracle handles dimension ≤ 3 (got {dim})"
        )));
    }
    lo.check_dim(dim)?;
    hi.check_dim(dim)?;
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::usage("grid step must be positive"));
    }
    let counts: Vec<u64> = (0..dim)
        .map(|j| {
            let span = hi[j] - lo[j];
            if span < 0.0 {
                Err(Error::usage("grid box must satisfy lo ≤ hi"))
            } else {
                Ok((span / step + 1e-9).floor() as u64 + 1)
            }
        })
        .collect::<Result<_>>()?;
    let total: u64 = counts.iter().product();
    if total > ORACLE_MAX_GRID_POINTS {
        return Err(Error::usage(format!(
            "grid has {total} points (limit {ORACLE_MAX_GRID_POINTS}); use a coarser step"
        )));
    }

    let loose = 10.0 * step;
    let tight = step / 100.0;
    let mut scratch = vec![0.0; dim];
    let mut point = vec![0.0; dim];
    let mut best: Option<(f64, Vec<f64>)> = None;
    for flat in 0..total {
        let mut rem = flat;
        for j in 0..dim {
            point[j] = lo[j] + (rem % counts[j]) as f64 * step;
            rem /= counts[j];
        }
        if max_residual(p, &point, &mut scratch) > loose {
            continue;
        }
        let val = objective(p, &point);
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, point.clone()));
        }
    }
    let (_, start) = best.ok_or_else(|| Error::usage("no grid point satisfies the fixed point constraints"))?;

    let mut x = pull_to_fixed_set(p, start, tight)
        .ok_or_else(|| Error::usage("could not reach the fixed point set from the grid optimum"))?;
    let mut fx = objective(p, &x);

    let directions = pattern_directions(dim);
    let mut h = step;
    for _ in 0..ORACLE_REFINE_ITERS {
        let mut improved: Option<(f64, Vec<f64>)> = None;
        for d in &directions {
            let trial: Vec<f64> = x.iter().zip(d).map(|(xj, dj)| xj + h * dj).collect();
            if let Some(trial) = pull_to_fixed_set(p, trial, tight) {
                let ft = objective(p, &trial);
                if ft < fx && improved.as_ref().is_none_or(|(b, _)| ft < *b) {
                    improved = Some((ft, trial));
                }
            }
        }
        match improved {
            Some((ft, trial)) => {
                x = trial;
                fx = ft;
            }
            None if h > tight => h = (h / 2.0).max(tight),
            None => break,
        }
    }
    Ok((Vector::new(x)?, fx))
}

fn objective(p: &NetworkProblem, x: &[f64]) -> f64 {
    p.users().iter().map(|u| u.f.eval_slice(x)).sum()
}

fn max_residual(p: &NetworkProblem, x: &[f64], scratch: &mut [f64]) -> f64 {
    p.users()
        .iter()
        .map(|u| u.op.residual_slice(x, scratch))
        .fold(0.0, f64::max)
}

/// Iterates `x ← T_I ∘ … ∘ T_1 (x)` until every residual is at most `tol`.
fn pull_to_fixed_set(p: &NetworkProblem, mut x: Vec<f64>, tol: f64) -> Option<Vec<f64>> {
    let mut scratch = vec![0.0; x.len()];
    let mut next = vec![0.0; x.len()];
    for _ in 0..ORACLE_PULL_ITERS {
        if max_residual(p, &x, &mut scratch) <= tol {
            return Some(x);
        }
        for u in p.users() {
            u.op.apply_into(&x, &mut next);
            std::mem::swap(&mut x, &mut next);
        }
    }
    None
}

fn pattern_directions(dim: usize) -> Vec<Vec<f64>> {
    let total = 3usize.pow(dim as u32);
    (0..total)
        .map(|mut code| {
            (0..dim)
                .map(|_| {
                    let d = (code % 3) as f64 - 1.0;
                    code /= 3;
                    d
                })
                .collect::<Vec<f64>>()
        })
        .filter(|d| d.iter().any(|&c| c != 0.0))
        .collect()
}
