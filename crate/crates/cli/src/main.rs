//! `fixprox`: benchmark runs, single-instance runs, schedule checks and the
//! brute-force oracle.
//!
//! Exit status is 0 on success, 1 on usage errors (bad flags, bad config,
//! rejected schedules) and 2 when a solver produces a non-finite iterate.

mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fixprox_core::bench::{
    self, BenchConfig, BenchReport, InstanceFile, Regime, SampleSeries, ScheduleVariant,
};
use fixprox_core::schedules::{validate_halpern, validate_km_raw, SchedulePair};
use fixprox_core::solvers::{self, Algorithm};
use fixprox_core::{Constant, Error, PowerLaw, Result, SolverOptions, Vector};
use serde::{Deserialize, Serialize};

use crate::config::{parse_value, read_config};

const SEED_ENV: &str = "FIXPROX_SEED";

#[derive(Parser, Debug)]
#[command(name = "fixprox", version, about = "Incremental proximal fixed point solvers and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a multi-sample benchmark and write the summary table.
    Bench(Box<BenchArgs>),
    /// Run one algorithm on an instance file.
    Run(RunArgs),
    /// Check step-size exponents against the convergence conditions.
    ValidateSchedule(ValidateArgs),
    /// Brute-force minimize a small (dimension ≤ 3) instance on a grid.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Default)]
struct BenchArgs {
    /// Base configuration: table1 (feasible) or table2 (infeasible) [default: table1]
    #[arg(long)]
    preset: Option<String>,
    /// key=value file using these flag names as keys; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed; falls back to the FIXPROX_SEED environment variable, then 0
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sample-level parallelism [default: 1]
    #[arg(long)]
    jobs: Option<usize>,
    /// Ambient dimension N
    #[arg(long)]
    dim: Option<usize>,
    /// Number of users I
    #[arg(long)]
    users: Option<usize>,
    /// Half-spaces per user K
    #[arg(long)]
    sets: Option<usize>,
    /// Number of random samples averaged
    #[arg(long)]
    samples: Option<usize>,
    /// Iteration cap
    #[arg(long)]
    max_iters: Option<usize>,
    /// feasible or infeasible
    #[arg(long)]
    regime: Option<String>,
    /// Comma-separated algorithm list, e.g. `halpern:ii,km` (no variant means both) or `all`
    #[arg(long)]
    algorithms: Option<String>,
    /// Restrict to one schedule variant: i or ii
    #[arg(long)]
    variant: Option<String>,
    /// Scale c of γ_n = c/(n+1)^a
    #[arg(long)]
    gamma_scale: Option<f64>,
    /// Scale c' of the Halpern α_n = c'/(n+1)^b
    #[arg(long)]
    alpha_scale: Option<f64>,
    /// Constant relaxation t of KM, ISM and PSM
    #[arg(long)]
    alpha_const: Option<f64>,
    /// Threshold on |F_{n−1} − F_n|
    #[arg(long)]
    stop_f_tol: Option<f64>,
    /// Threshold on |D_{n−1} − D_n|
    #[arg(long)]
    stop_d_tol: Option<f64>,
    /// Offset range `lo,hi` of the infeasible-regime half-spaces (both below −1)
    #[arg(long, allow_hyphen_values = true)]
    infeasible_offsets: Option<String>,
    /// Track the per-iteration inequality monitors (feasible regime only): true or false
    #[arg(long)]
    monitor: Option<bool>,
    /// Output format [default: json if --out ends in .json, else csv]
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Output file [default: standard output]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write each sample's instance and per-sample series into this directory
    #[arg(long)]
    dump_instances: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Instance file written by `bench --dump-instances`
    #[arg(long)]
    instance: PathBuf,
    /// halpern, km, ism or psm
    #[arg(long)]
    algorithm: String,
    /// Schedule variant supplying default exponents: i or ii
    #[arg(long, default_value = "i")]
    variant: String,
    #[arg(long, default_value_t = 1e-3)]
    gamma_scale: f64,
    /// Override the variant's γ exponent
    #[arg(long)]
    gamma_exp: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    alpha_scale: f64,
    /// Override the variant's Halpern α exponent
    #[arg(long)]
    alpha_exp: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    alpha_const: f64,
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
    /// Regenerate the initial point from this seed instead of using the stored one
    #[arg(long)]
    x0_seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Halpern,
    Km,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Exponent a of γ_n
    #[arg(long)]
    gamma_exp: f64,
    /// Exponent b of the Halpern α_n
    #[arg(long)]
    alpha_exp: Option<f64>,
    /// Constant relaxation t (km mode)
    #[arg(long, default_value_t = 0.5)]
    alpha_const: f64,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Grid spacing
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// Lower corner of the search box (same value in every coordinate)
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    lo: f64,
    /// Upper corner of the search box
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    hi: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Per-sample series stored next to each dumped instance.
#[derive(Serialize, Deserialize)]
struct SeriesFile {
    max_iters: usize,
    gamma_scale: f64,
    alpha_scale: f64,
    alpha_const: f64,
    runs: Vec<SampleSeries>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("{line}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Bench(args) => cmd_bench(*args),
        Command::Run(args) => cmd_run(args),
        Command::ValidateSchedule(args) => cmd_validate(args),
        Command::Oracle(args) => cmd_oracle(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn output_format(explicit: Option<Format>, out: Option<&Path>) -> Format {
    explicit.unwrap_or_else(|| match out.and_then(|p| p.extension()) {
        Some(ext) if ext == "json" => Format::Json,
        _ => Format::Csv,
    })
}

/// Flag value if given, else the config-file value, else `None`.
fn pick<T: FromStr + Clone>(flag: &Option<T>, file: &mut BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    let from_file = file.remove(key);
    if let Some(v) = flag {
        return Ok(Some(v.clone()));
    }
    from_file.map(|v| parse_value(key, &v)).transpose()
}

fn parse_algorithms(spec: &str) -> Result<Vec<(Algorithm, ScheduleVariant)>> {
    if spec.trim() == "all" {
        return Ok(all_algorithms());
    }
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once(':') {
            Some((alg, var)) => out.push((Algorithm::parse(alg)?, ScheduleVariant::parse(var)?)),
            None => {
                let alg = Algorithm::parse(item)?;
                out.extend(ScheduleVariant::ALL.iter().map(|&v| (alg, v)));
            }
        }
    }
    if out.is_empty() {
        return Err(Error::usage("empty algorithm list"));
    }
    Ok(out)
}

fn all_algorithms() -> Vec<(Algorithm, ScheduleVariant)> {
    Algorithm::ALL
        .iter()
        .flat_map(|&a| ScheduleVariant::ALL.iter().map(move |&v| (a, v)))
        .collect()
}

fn resolve_bench_config(args: &BenchArgs) -> Result<BenchConfig> {
    let mut file = match &args.config {
        Some(path) => read_config(path)?,
        None => BTreeMap::new(),
    };
    let seed = match pick(&args.seed, &mut file, "seed")? {
        Some(s) => s,
        None => match std::env::var(SEED_ENV) {
            Ok(v) => parse_value(SEED_ENV, v.trim())?,
            Err(_) => 0,
        },
    };
    let preset = pick(&args.preset, &mut file, "preset")?.unwrap_or_else(|| "table1".to_string());
    let mut cfg = match preset.as_str() {
        "table1" => BenchConfig::table1(seed),
        "table2" => BenchConfig::table2(seed),
        other => return Err(Error::usage(format!("unknown preset '{other}' (expected table1 or table2)"))),
    };
    if let Some(v) = pick(&args.jobs, &mut file, "jobs")? {
        cfg.jobs = v;
    }
    if let Some(v) = pick(&args.dim, &mut file, "dim")? {
        cfg.dim = v;
    }
    if let Some(v) = pick(&args.users, &mut file, "users")? {
        cfg.users = v;
    }
    if let Some(v) = pick(&args.sets, &mut file, "sets")? {
        cfg.sets = v;
    }
    if let Some(v) = pick(&args.samples, &mut file, "samples")? {
        cfg.samples = v;
    }
    if let Some(v) = pick(&args.max_iters, &mut file, "max-iters")? {
        cfg.max_iters = v;
    }
    if let Some(v) = pick(&args.regime, &mut file, "regime")? {
        cfg.regime = Regime::parse(&v)?;
        cfg.monitor = cfg.regime == Regime::Feasible;
    }
    if let Some(v) = pick(&args.algorithms, &mut file, "algorithms")? {
        cfg.algorithms = parse_algorithms(&v)?;
    }
    if let Some(v) = pick(&args.variant, &mut file, "variant")? {
        let variant = ScheduleVariant::parse(&v)?;
        cfg.algorithms.retain(|&(_, var)| var == variant);
    }
    if let Some(v) = pick(&args.gamma_scale, &mut file, "gamma-scale")? {
        cfg.gamma_scale = v;
    }
    if let Some(v) = pick(&args.alpha_scale, &mut file, "alpha-scale")? {
        cfg.alpha_scale = v;
    }
    if let Some(v) = pick(&args.alpha_const, &mut file, "alpha-const")? {
        cfg.alpha_const = v;
    }
    if let Some(v) = pick(&args.stop_f_tol, &mut file, "stop-f-tol")? {
        cfg.stop_f_tol = v;
    }
    if let Some(v) = pick(&args.stop_d_tol, &mut file, "stop-d-tol")? {
        cfg.stop_d_tol = v;
    }
    if let Some(v) = pick(&args.infeasible_offsets, &mut file, "infeasible-offsets")? {
        let (lo, hi) = v
            .split_once(',')
            .ok_or_else(|| Error::usage("--infeasible-offsets expects lo,hi"))?;
        cfg.infeasible_offsets = (parse_value("infeasible-offsets", lo.trim())?, parse_value("infeasible-offsets", hi.trim())?);
    }
    if let Some(v) = pick(&args.monitor, &mut file, "monitor")? {
        cfg.monitor = v;
    }
    if let Some(key) = file.keys().next() {
        return Err(Error::usage(format!("unknown config key '{key}'")));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode> {
    let cfg = resolve_bench_config(&args)?;
    let report = bench::run_benchmark(&cfg)?;
    if let Some(dir) = &args.dump_instances {
        dump_instances(dir, &cfg, &report)?;
    }
    let out = args.out.as_deref();
    let text = match output_format(args.format, out) {
        Format::Csv => report.to_csv(),
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
    };
    emit(out, &text)?;
    Ok(ExitCode::SUCCESS)
}

fn dump_instances(dir: &Path, cfg: &BenchConfig, report: &BenchReport) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))?;
    for (s, runs) in report.per_sample.iter().enumerate() {
        InstanceFile::for_sample(cfg, s).save(&dir.join(format!("sample_{s:04}.json")))?;
        let series = SeriesFile {
            max_iters: cfg.max_iters,
            gamma_scale: cfg.gamma_scale,
            alpha_scale: cfg.alpha_scale,
            alpha_const: cfg.alpha_const,
            runs: runs.clone(),
        };
        std::fs::write(dir.join(format!("sample_{s:04}.series.json")), serde_json::to_string(&series)?)?;
    }
    Ok(())
}

fn run_schedule(args: &RunArgs, alg: Algorithm) -> Result<SchedulePair> {
    let variant = ScheduleVariant::parse(&args.variant)?;
    let gamma = PowerLaw::new(args.gamma_scale, args.gamma_exp.unwrap_or(variant.gamma_exponent()))?;
    if alg == Algorithm::Halpern {
        let alpha = PowerLaw::new(args.alpha_scale, args.alpha_exp.unwrap_or(variant.alpha_exponent()))?;
        SchedulePair::halpern(gamma, alpha)
    } else {
        if args.alpha_exp.is_some() {
            return Err(Error::usage("--alpha-exp applies to halpern only; use --alpha-const"));
        }
        SchedulePair::km(gamma, Constant::new(args.alpha_const)?)
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let alg = Algorithm::parse(&args.algorithm)?;
    let schedule = run_schedule(&args, alg)?;
    let inst = InstanceFile::load(&args.instance)?;
    let x0: Vector = match args.x0_seed {
        Some(seed) => bench::initial_point_from_seed(seed, inst.problem.dim()),
        None => inst.x0.clone(),
    };
    let trace = solvers::run(alg, &inst.problem, &schedule, &x0, &SolverOptions::new(args.max_iters))?;
    let out = args.out.as_deref();
    let text = match output_format(args.format, out) {
        Format::Json => serde_json::to_string_pretty(&trace)? + "\n",
        Format::Csv => {
            let mut s = String::from("n,objective,residual,time_s\n");
            for n in 0..trace.objective.len() {
                writeln!(s, "{n},{},{},{}", trace.objective[n], trace.residual[n], trace.time_s[n])
                    .expect("writing to a String cannot fail");
            }
            s
        }
    };
    emit(out, &text)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(args: ValidateArgs) -> Result<ExitCode> {
    let gamma = PowerLaw::new(1.0, args.gamma_exp)?;
    let verdict = match args.mode {
        Mode::Halpern => {
            let b = args
                .alpha_exp
                .ok_or_else(|| Error::usage("--alpha-exp is required for --mode halpern"))?;
            validate_halpern(&gamma, &PowerLaw::new(1.0, b)?)
        }
        Mode::Km => validate_km_raw(&gamma, args.alpha_const),
    };
    println!("{verdict}");
    Ok(if verdict.is_valid() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_oracle(args: OracleArgs) -> Result<ExitCode> {
    let inst = InstanceFile::load(&args.instance)?;
    let dim = inst.problem.dim();
    let lo = Vector::new(vec![args.lo; dim])?;
    let hi = Vector::new(vec![args.hi; dim])?;
    let (x, value) = bench::oracle_solve(&inst.problem, &lo, &hi, args.step)?;
    let text = serde_json::to_string_pretty(&serde_json::json!({ "x": x, "value": value }))? + "\n";
    emit(args.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}
