//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.
//!
//! Optional argument: a comma-separated list of criterion numbers to run.

use std::process::Command;
use std::time::{Duration, Instant};

use fixprox_core::bench::{self, BenchConfig, ScheduleVariant};
use fixprox_core::schedules::Fixed;
use fixprox_core::solvers::{self, Algorithm};
use fixprox_core::{
    make_gcfs_operator, ClosedConvexSet, Constant, NetworkProblem, PowerLaw, ProximableFunction,
    RandomSource, SolverOptions, Vector, WeightedShiftedL1,
};
use fixprox_core::schedules::SchedulePair;

struct Outcome {
    ok: bool,
    detail: String,
}

type Criterion = (u32, &'static str, Option<Duration>, fn() -> Outcome);

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

fn main() {
    let only: Option<Vec<u32>> = std::env::args()
        .skip(1)
        .find(|a| !a.starts_with('-'))
        .map(|a| a.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let criteria: [Criterion; 8] = [
        (1, "prox correctness", Some(Duration::from_secs(5)), prox_correctness),
        (2, "firm nonexpansiveness", Some(Duration::from_secs(5)), firm_nonexpansiveness),
        (3, "inequality monitors", Some(Duration::from_secs(60)), inequality_monitors),
        (4, "oracle equivalence", Some(Duration::from_secs(120)), oracle_equivalence),
        (5, "feasible benchmark trends", None, feasible_table),
        (6, "infeasible benchmark trends", None, infeasible_table),
        (7, "degenerate schedules", Some(Duration::from_secs(10)), degeneracies),
        (8, "determinism", None, determinism),
    ];
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let mut res = check();
        let elapsed = start.elapsed();
        if let Some(limit) = limit {
            if elapsed > limit {
                res.ok = false;
                res.detail += &format!("; exceeded time limit {limit:?}");
            }
        }
        println!(
            "{} criterion {id} ({name}) in {:.1}s: {}",
            if res.ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            res.detail
        );
        if !res.ok {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn vec_of(c: &[f64]) -> Vector {
    Vector::new(c.to_vec()).unwrap()
}

fn random_l1(rng: &mut RandomSource, dim: usize) -> (Vec<f64>, Vec<f64>, ProximableFunction) {
    let w: Vec<f64> = (0..dim).map(|_| rng.uniform(0.05, 2.0)).collect();
    let a: Vec<f64> = (0..dim).map(|_| rng.uniform(-3.0, 3.0)).collect();
    let f = WeightedShiftedL1::new(vec_of(&w), vec_of(&a)).unwrap().into();
    (w, a, f)
}

/// Minimizes `γ Σ ω_j|y_j − a_j| + ½‖x − y‖²` over `[−3, 3]^dim` on a grid:
/// a coarse pass over the whole box, then step 1e−3 around the coarse best.
fn grid_prox(w: &[f64], a: &[f64], gamma: f64, x: &[f64]) -> Vec<f64> {
    let dim = x.len();
    let obj = |y: &[f64]| -> f64 {
        let mut s = 0.0;
        for j in 0..dim {
            s += gamma * w[j] * (y[j] - a[j]).abs() + 0.5 * (x[j] - y[j]).powi(2);
        }
        s
    };
    let search = |lo: &[f64], count: usize, step: f64| -> Vec<f64> {
        let total = count.pow(dim as u32);
        let mut best = (f64::INFINITY, vec![0.0; dim]);
        let mut y = vec![0.0; dim];
        for flat in 0..total {
            let mut rem = flat;
            for j in 0..dim {
                y[j] = lo[j] + (rem % count) as f64 * step;
                rem /= count;
            }
            let v = obj(&y);
            if v < best.0 {
                best = (v, y.clone());
            }
        }
        best.1
    };
    let coarse_step: f64 = [1e-3, 1e-2, 5e-2][dim - 1];
    let coarse_count = (6.0 / coarse_step).round() as usize + 1;
    let coarse = search(&vec![-3.0; dim], coarse_count, coarse_step);
    let radius = 2.0 * coarse_step;
    let lo: Vec<f64> = coarse.iter().map(|c| c - radius).collect();
    search(&lo, (2.0 * radius / 1e-3).round() as usize + 1, 1e-3)
}

fn prox_correctness() -> Outcome {
    let mut rng = RandomSource::new(101);
    let mut worst_inclusion = 0.0f64;
    for _ in 0..1000 {
        let dim = 1 + (rng.uniform(0.0, 1.0) * 5.0) as usize % 5;
        let (w, a, f) = random_l1(&mut rng, dim);
        let gamma = rng.uniform(1e-9, 2.0);
        let x: Vec<f64> = (0..dim).map(|_| rng.uniform(-5.0, 5.0)).collect();
        let p = f.prox(gamma, &vec_of(&x)).unwrap();
        for j in 0..dim {
            let r = x[j] - p[j];
            // r must lie in γω_j·∂|·|(p_j − a_j).
            let viol = if p[j] == a[j] {
                (r.abs() - gamma * w[j]).max(0.0)
            } else {
                (r - gamma * w[j] * (p[j] - a[j]).signum()).abs()
            };
            worst_inclusion = worst_inclusion.max(viol);
        }
    }
    let mut worst_grid = 0.0f64;
    let counts = [(1, 60), (2, 30), (3, 4)];
    for (dim, n) in counts {
        for _ in 0..n {
            let (w, a, f) = random_l1(&mut rng, dim);
            let gamma = rng.uniform(0.01, 2.0);
            let x: Vec<f64> = (0..dim).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let p = f.prox(gamma, &vec_of(&x)).unwrap();
            let g = grid_prox(&w, &a, gamma, &x);
            for j in 0..dim {
                worst_grid = worst_grid.max((p[j] - g[j]).abs());
            }
        }
    }
    outcome(
        worst_inclusion <= 1e-10 && worst_grid <= 2e-3,
        format!("max inclusion violation {worst_inclusion:.2e} (≤ 1e-10), max grid deviation {worst_grid:.2e} (≤ 2e-3)"),
    )
}

fn firm_gap(x: &[f64], y: &[f64], tx: &[f64], ty: &[f64]) -> f64 {
    let mut d_t = 0.0;
    let mut d_r = 0.0;
    let mut d_x = 0.0;
    for j in 0..x.len() {
        d_t += (tx[j] - ty[j]).powi(2);
        d_r += ((x[j] - tx[j]) - (y[j] - ty[j])).powi(2);
        d_x += (x[j] - y[j]).powi(2);
    }
    d_t + d_r - d_x
}

fn firm_nonexpansiveness() -> Outcome {
    let dim = 20;
    let mut rng = RandomSource::new(202);
    let ball = ClosedConvexSet::ball(rng.sample_uniform(dim, -0.5, 0.5).unwrap(), 1.3).unwrap();
    let half = ClosedConvexSet::half_space(rng.unit_direction(dim), 0.2).unwrap();
    let sets = |rng: &mut RandomSource, lo: f64, hi: f64| -> Vec<ClosedConvexSet> {
        (0..3)
            .map(|_| ClosedConvexSet::half_space(rng.unit_direction(dim), rng.uniform(lo, hi)).unwrap())
            .collect()
    };
    let w = vec![1.0 / 3.0; 3];
    let feasible = make_gcfs_operator(ClosedConvexSet::unit_ball(dim), sets(&mut rng, 0.0, 1.0), w.clone()).unwrap();
    let infeasible = make_gcfs_operator(ClosedConvexSet::unit_ball(dim), sets(&mut rng, -3.0, -2.0), w).unwrap();
    let (_, _, f) = random_l1(&mut rng, dim);

    type Map<'a> = Box<dyn Fn(&Vector) -> Vector + 'a>;
    let maps: Vec<(&str, Map)> = vec![
        ("ball projection", Box::new(|x| ball.project(x).unwrap())),
        ("half-space projection", Box::new(|x| half.project(x).unwrap())),
        ("prox", Box::new(|x| f.prox(0.7, x).unwrap())),
        ("feasible gcfs", Box::new(|x| feasible.apply(x).unwrap())),
        ("infeasible gcfs", Box::new(|x| infeasible.apply(x).unwrap())),
    ];
    let mut worst = (f64::NEG_INFINITY, "");
    for (name, map) in &maps {
        for _ in 0..1000 {
            let x = rng.sample_uniform(dim, -4.0, 4.0).unwrap();
            let y = rng.sample_uniform(dim, -4.0, 4.0).unwrap();
            let gap = firm_gap(x.as_slice(), y.as_slice(), map(&x).as_slice(), map(&y).as_slice());
            if gap > worst.0 {
                worst = (gap, name);
            }
        }
    }
    outcome(worst.0 <= 1e-9, format!("largest violation {:.2e} ({}), slack 1e-9", worst.0, worst.1))
}

fn inequality_monitors() -> Outcome {
    let cfg = BenchConfig::table1(303);
    let mut worst = f64::NEG_INFINITY;
    let mut records = 0;
    for s in 0..10 {
        let p = bench::generate_instance(&cfg, s);
        let x0 = bench::initial_point(&cfg, s);
        let variant = ScheduleVariant::ALL[s % 2];
        let schedule = cfg.schedule(Algorithm::Km, variant).unwrap();
        let opts = SolverOptions::new(cfg.max_iters).with_monitors(Vector::zeros(cfg.dim));
        let trace = solvers::run(Algorithm::Km, &p, &schedule, &x0, &opts).unwrap();
        for m in &trace.monitors {
            worst = worst.max(m.prox_gap).max(m.sweep_gap.unwrap());
            records += 1;
        }
    }
    outcome(
        worst <= 1e-9 && records == 10 * cfg.max_iters,
        format!("{records} monitored iterations, largest gap {worst:.2e} (≤ 1e-9)"),
    )
}

/// Membership tolerance on the residual sum, matching the oracle's grid test
/// (10 × grid step).
const ORACLE_MEMBERSHIP: f64 = 1e-2;

/// Smallest objective over iterates that pass the oracle's membership test.
fn best_feasible_objective(objective: &[f64], residual: &[f64]) -> f64 {
    objective
        .iter()
        .zip(residual)
        .filter(|(_, &r)| r <= ORACLE_MEMBERSHIP)
        .map(|(&f, _)| f)
        .fold(f64::INFINITY, f64::min)
}

/// Runs every method with the benchmark's variant (ii) schedules.
fn oracle_equivalence() -> Outcome {
    let mut worst = [(0.0f64, 0u64); 4];
    for k in 0..20u64 {
        let cfg = BenchConfig {
            dim: 2,
            users: 2,
            sets: 1,
            samples: 1,
            max_iters: 20_000,
            ..BenchConfig::table1(4000 + k)
        };
        let p = bench::generate_instance(&cfg, 0);
        let x0 = bench::initial_point(&cfg, 0);
        let (_, oracle) = bench::oracle_solve(&p, &vec_of(&[-1.0, -1.0]), &vec_of(&[1.0, 1.0]), 1e-3).unwrap();
        for (slot, alg) in worst.iter_mut().zip(Algorithm::ALL) {
            let schedule = cfg.schedule(alg, ScheduleVariant::Ii).unwrap();
            let trace = solvers::run(alg, &p, &schedule, &x0, &SolverOptions::new(cfg.max_iters)).unwrap();
            let dev = (best_feasible_objective(&trace.objective, &trace.residual) - oracle).abs();
            if dev > slot.0 || dev.is_nan() {
                *slot = (dev, k);
            }
        }
    }
    let ok = worst.iter().all(|w| w.0 <= 1e-2);
    let parts: Vec<String> = Algorithm::ALL
        .iter()
        .zip(&worst)
        .map(|(a, (d, k))| format!("{} {d:.1e} (instance {k})", a.name()))
        .collect();
    outcome(ok, format!("largest |best − oracle| per method (≤ 1e-2): {}", parts.join(", ")))
}

fn feasible_table() -> Outcome {
    let report = bench::run_benchmark(&BenchConfig::table1(7)).unwrap();
    let max_d = report.rows.iter().map(|r| r.final_d()).fold(0.0, f64::max);
    let km = report.row(Algorithm::Km, ScheduleVariant::I).unwrap().final_f();
    let ism = report.row(Algorithm::Ism, ScheduleVariant::I).unwrap().final_f();
    let rel = (km - ism).abs() / ism;
    let psm_capped = report.rows.iter().filter(|r| r.algorithm == Algorithm::Psm).all(|r| r.stop_f.n.is_none());
    let incremental_stop = report.rows.iter().filter(|r| r.algorithm != Algorithm::Psm).all(|r| r.stop_f.n.is_some());
    let ok = max_d <= 5e-3 && rel < 1e-2 && psm_capped && incremental_stop;
    outcome(
        ok,
        format!(
            "(a) max D at cap {max_d:.2e} (≤ 5e-3); (b) KM(i) vs ISM(i) relative F gap {rel:.2e} (< 1e-2); \
             (c) PSM capped: {psm_capped}, incremental methods stop: {incremental_stop}"
        ),
    )
}

fn infeasible_table() -> Outcome {
    let pair = vec![(Algorithm::Halpern, ScheduleVariant::Ii), (Algorithm::Km, ScheduleVariant::Ii)];
    let mut max_d = (0.0f64, String::new());
    let mut wins = 0;
    let mut gaps = Vec::new();
    for seed in 0..10u64 {
        let mut cfg = BenchConfig::table2(seed);
        if seed > 0 {
            cfg.algorithms = pair.clone();
        }
        let report = bench::run_benchmark(&cfg).unwrap();
        for r in &report.rows {
            if r.final_d() > max_d.0 {
                max_d = (r.final_d(), format!("{} seed {seed}", r.label()));
            }
        }
        let h = report.row(Algorithm::Halpern, ScheduleVariant::Ii).unwrap().final_f();
        let k = report.row(Algorithm::Km, ScheduleVariant::Ii).unwrap().final_f();
        gaps.push(h - k);
        if h <= k {
            wins += 1;
        }
    }
    let gap_range = gaps.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &g| (lo.min(g), hi.max(g)));
    outcome(
        max_d.0 <= 5e-3 && wins >= 8,
        format!(
            "(a) max D at cap {:.2e} (≤ 5e-3, worst {}); (b) Halpern(ii) F ≤ KM(ii) F on {wins}/10 seeds (need ≥ 8), \
             F difference range [{:.1e}, {:.1e}]",
            max_d.0, max_d.1, gap_range.0, gap_range.1
        ),
    )
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn degeneracies() -> Outcome {
    let cfg = BenchConfig { max_iters: 300, ..BenchConfig::table1(707) };
    let opts = SolverOptions::new(cfg.max_iters).with_trace();
    let mut failures = Vec::new();
    for s in 0..3 {
        let p = bench::generate_instance(&cfg, s);
        let x0 = bench::initial_point(&cfg, s);
        let gamma = PowerLaw::new(1e-3, 0.25).unwrap();
        let iterates = |t: &solvers::RunTrace| -> Vec<f64> {
            t.iterates.as_ref().unwrap().iter().flat_map(|v| v.as_slice().to_vec()).collect()
        };

        let km0 = solvers::run_unchecked(Algorithm::Km, &p, &Fixed(0.0), &Fixed(0.5), &x0, &opts).unwrap();
        let ism0 = solvers::run_unchecked(Algorithm::Ism, &p, &Fixed(0.0), &Fixed(0.5), &x0, &opts).unwrap();
        if !same_bits(&iterates(&km0), &iterates(&ism0)) || !same_bits(&km0.objective, &ism0.objective) {
            failures.push(format!("γ≡0 KM/ISM differ on sample {s}"));
        }

        let h = solvers::run_unchecked(Algorithm::Halpern, &p, &gamma, &Fixed(0.0), &x0, &opts).unwrap();
        let km = solvers::run_unchecked(Algorithm::Km, &p, &gamma, &Fixed(0.0), &x0, &opts).unwrap();
        if !same_bits(&iterates(&h), &iterates(&km)) || !same_bits(&h.residual, &km.residual) {
            failures.push(format!("α≡0 Halpern/KM differ on sample {s}"));
        }

        let schedule = SchedulePair::km(gamma, Constant::new(0.5).unwrap()).unwrap();
        let base = solvers::run(Algorithm::Psm, &p, &schedule, &x0, &opts).unwrap();
        let mut rng = RandomSource::new(900 + s as u64);
        for _ in 0..3 {
            let order = rng.permutation(p.num_users());
            let users = order.iter().map(|&i| p.users()[i].clone()).collect();
            let permuted = NetworkProblem::new(users).unwrap();
            let t = solvers::run(Algorithm::Psm, &permuted, &schedule, &x0, &opts).unwrap();
            if !same_bits(&iterates(&base), &iterates(&t)) {
                failures.push(format!("PSM iterates change under permutation {order:?}"));
            }
        }
    }
    let ok = failures.is_empty();
    outcome(
        ok,
        if ok {
            "γ≡0 KM = ISM, α≡0 Halpern = KM and permuted PSM all bitwise identical on 3 instances".to_string()
        } else {
            failures.join("; ")
        },
    )
}

fn cli_bench(jobs: u32) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_fixprox"))
        .args(["bench", "--preset", "table1", "--seed", "7", "--jobs", &jobs.to_string()])
        .output()
        .expect("failed to start fixprox");
    assert!(out.status.success(), "bench failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Drops the wall-clock columns `time_F_s` and `time_D_s`.
fn without_times(csv: &str) -> String {
    csv.lines()
        .map(|line| {
            line.split(',')
                .enumerate()
                .filter(|(i, _)| *i != 3 && *i != 6)
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism() -> Outcome {
    let first = cli_bench(1);
    let second = cli_bench(1);
    let parallel = cli_bench(8);
    let rows = first.lines().count() - 1;
    let repeat_same = without_times(&first) == without_times(&second);
    let parallel_same = without_times(&first) == without_times(&parallel);
    let bytes_same = first == second;
    outcome(
        repeat_same && parallel_same && rows == 8,
        format!(
            "{rows} rows; repeated --jobs 1 identical apart from wall-clock columns: {repeat_same}; \
             --jobs 8 values identical: {parallel_same}; full bytes identical including timings: {bytes_same}"
        ),
    )
}
