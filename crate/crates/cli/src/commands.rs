use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use cpid_core::bounds::{
    horizon_diagnostics, lb_any_exact_n, lb_any_general, lb_exact_n, lb_single, optimal_proportions, BoundReport,
};
use cpid_core::format::g17;
use cpid_core::harness::{
    self, run_experiment, Algorithm, CiMethod, CorrectnessMode, ExperimentConfig, ExperimentRecord,
};
use cpid_core::policy::{run_cpi_observed, run_mcpi_observed, run_oracle_tracking_observed, GuardRule, TrajectoryCsv};
use cpid_core::rng::derive_seed;
use cpid_core::{EnvironmentSpec, Validation};
use serde_json::{json, Value};

use crate::{AlgoArg, BoundsArgs, FormatArg, GuardArg, ModeArg, PlotDataArgs, RunArgs, SummarizeArgs, ValidateArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Loads an environment file, falling back to the bundled `v1`..`v4` when a
/// file of that name does not exist.
fn load_env(path: &Path) -> CliResult<EnvironmentSpec> {
    let env = if path.exists() {
        EnvironmentSpec::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))?
    } else {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        match EnvironmentSpec::bundled(name) {
            Some(env) if path.parent().is_none_or(|p| p.as_os_str().is_empty()) => env,
            _ => return Err(usage(format!("{}: no such file", path.display()))),
        }
    };
    env.validate().map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(env)
}

fn output(path: Option<&PathBuf>) -> CliResult<Box<dyn Write>> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn read_records(path: &Path) -> CliResult<Vec<ExperimentRecord>> {
    let f = File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    harness::read_records(BufReader::new(f)).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn run(a: RunArgs) -> CliResult {
    let env = load_env(&a.env)?;
    let algorithm = match a.algo {
        AlgoArg::Cpi => Algorithm::Cpi,
        AlgoArg::Mcpi => Algorithm::Mcpi,
        AlgoArg::Oracle => Algorithm::Oracle,
    };
    let mut config = ExperimentConfig::new(env, algorithm, a.n, a.delta_grid.clone(), a.reps);
    config.base_seed = a.seed;
    config.parallelism = a
        .parallel
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    config.step_cap = a.step_cap;
    config.guard = a.guard.map(|g| match g {
        GuardArg::ClearLeader => GuardRule::ClearLeader,
        GuardArg::AnyPair => GuardRule::AnyPair,
    });
    config.mode = match a.mode {
        ModeArg::Any => CorrectnessMode::Any,
        ModeArg::Exact => CorrectnessMode::Exact,
    };
    config.timing = !a.no_timing;
    config.validate().map_err(usage)?;

    if let Some(path) = &a.trace {
        write_trace(&config, path)?;
    }

    let records = run_experiment(&config).map_err(runtime)?;
    harness::write_records(output(a.out.as_ref())?, &records).map_err(runtime)?;

    let summary = harness::summarize(&records).map_err(runtime)?;
    if let Some(path) = &a.summary_out {
        harness::write_summary(output(Some(path))?, &summary).map_err(runtime)?;
    }
    let mut log: Box<dyn Write> = if a.out.is_some() {
        Box::new(io::stdout().lock())
    } else {
        Box::new(io::stderr().lock())
    };
    for row in &summary {
        writeln!(
            log,
            "delta={} n={} mean_tau={:.1} ci90=[{:.1}, {:.1}] error_rate={:.4} truncated={}",
            g17(row.delta),
            row.n,
            row.mean_tau,
            row.ci90_low,
            row.ci90_high,
            row.error_rate,
            row.truncation_count
        )
        .map_err(runtime)?;
    }
    Ok(())
}

fn write_trace(config: &ExperimentConfig, path: &Path) -> CliResult {
    let delta = config.deltas[0];
    let policy = config.policy_config(delta);
    let seed = derive_seed(config.base_seed, 0, 0);
    let file = File::create(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    let mut trace = TrajectoryCsv::new(BufWriter::new(file)).map_err(runtime)?;
    match config.algorithm {
        Algorithm::Cpi => run_cpi_observed(&config.env, &policy, seed, &mut trace),
        Algorithm::Mcpi => run_mcpi_observed(&config.env, &policy, seed, &mut trace),
        Algorithm::Oracle => run_oracle_tracking_observed(&config.env, &policy, seed, &mut trace),
    }
    .map_err(runtime)?;
    trace.finish().map_err(runtime)?;
    Ok(())
}

fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::Number(g17(x).parse().expect("finite float renders as a JSON number"))
    } else {
        Value::Null
    }
}

fn report_json(r: &BoundReport) -> Value {
    let components: serde_json::Map<String, Value> = r.components.iter().map(|(k, v)| (k.clone(), num(*v))).collect();
    json!({
        "theorem_id": r.theorem_id.to_string(),
        "value": num(r.value),
        "components": components,
        "vacuous": r.vacuous,
    })
}

pub fn bounds(a: BoundsArgs) -> CliResult {
    let env = load_env(&a.env)?;
    let sigma = a.sigma.unwrap_or(env.sigma);
    let m = env.num_change_points();
    if m == 0 {
        return Err(usage("environment has no change points"));
    }
    if !(a.delta > 0.0 && a.delta < 1.0) {
        return Err(usage(format!("delta must lie in (0, 1), got {}", a.delta)));
    }
    if a.n == 0 || a.n > m {
        return Err(usage(format!("--n must lie in 1..={m}, got {}", a.n)));
    }

    let mut reports = Vec::new();
    if m == 1 {
        reports.push(lb_single(&env, sigma, a.delta).map_err(usage)?);
    }
    reports.push(lb_exact_n(&env, sigma, a.delta).map_err(usage)?);
    reports.push(lb_any_exact_n(&env, sigma, a.delta).map_err(usage)?);
    reports.push(lb_any_general(&env, sigma, a.delta, a.n).map_err(usage)?);
    let proportions = optimal_proportions(&env).map_err(usage)?;
    let horizons = horizon_diagnostics(&env, sigma, a.delta, a.n).map_err(usage)?;
    let vacuous = a.delta >= 0.25;

    let big = |v: Option<u128>| v.map_or(Value::Null, |t| Value::String(t.to_string()));
    let doc = json!({
        "environment": env.name,
        "delta": num(a.delta),
        "n": a.n,
        "sigma": num(sigma),
        "change_points": env.change_points(),
        "gaps": env.gaps().iter().map(|g| num(g.size)).collect::<Vec<_>>(),
        "vacuous": vacuous,
        "bounds": reports.iter().map(report_json).collect::<Vec<_>>(),
        "optimal_proportions": proportions.iter().map(|&w| num(w)).collect::<Vec<_>>(),
        "horizons": {
            "t0_prime": big(horizons.t0_prime),
            "t1_prime": big(horizons.t1_prime),
            "expected_tau_bound": horizons.expected_tau_bound.map_or(Value::Null, num),
        },
    });
    let text = serde_json::to_string_pretty(&doc).map_err(runtime)?;
    if let Some(path) = &a.json {
        let mut out = output(Some(path))?;
        writeln!(out, "{text}").map_err(runtime)?;
        out.flush().map_err(runtime)?;
    }

    let mut out = io::stdout().lock();
    let w = |out: &mut io::StdoutLock, s: String| writeln!(out, "{s}").map_err(runtime);
    match a.format {
        FormatArg::Json => w(&mut out, text)?,
        FormatArg::Table => {
            let label = if env.name.is_empty() {
                "environment"
            } else {
                env.name.as_str()
            };
            w(
                &mut out,
                format!(
                    "{label}: K={} m={m} sigma={} delta={} N={}",
                    env.num_arms(),
                    g17(sigma),
                    g17(a.delta),
                    a.n
                ),
            )?;
            if vacuous {
                w(&mut out, "warning: delta >= 1/4, lower bounds are vacuous".into())?;
            }
            w(&mut out, format!("{:<10} {:>22}", "bound", "expected samples"))?;
            for r in &reports {
                let shown = if r.value < 0.0 {
                    format!("{} (raw {})", g17(r.display_value()), g17(r.value))
                } else {
                    g17(r.value)
                };
                w(&mut out, format!("{:<10} {:>22}", r.theorem_id.to_string(), shown))?;
            }
            w(&mut out, "optimal proportions:".into())?;
            for (i, &p) in proportions.iter().enumerate().filter(|(_, p)| **p > 0.0) {
                w(&mut out, format!("  arm {:>3}: {}", i + 1, g17(p)))?;
            }
            let show = |v: Option<u128>| v.map_or("unbounded".to_string(), |t| t.to_string());
            w(&mut out, format!("T0' = {}", show(horizons.t0_prime)))?;
            w(&mut out, format!("T1' = {}", show(horizons.t1_prime)))?;
            if let Some(b) = horizons.expected_tau_bound {
                w(&mut out, format!("T0' + T1' + 2eK = {}", g17(b)))?;
            }
        }
    }
    Ok(())
}

pub fn summarize(a: SummarizeArgs) -> CliResult {
    let records = read_records(&a.records)?;
    let ci = match a.bootstrap {
        Some(resamples) => CiMethod::Bootstrap {
            resamples,
            seed: a.bootstrap_seed,
        },
        None => CiMethod::Normal,
    };
    let rows = harness::summarize_with(&records, ci).map_err(usage)?;
    harness::write_summary(output(a.out.as_ref())?, &rows).map_err(runtime)
}

pub fn plot_data(a: PlotDataArgs) -> CliResult {
    let records = read_records(&a.records)?;
    let env = load_env(&a.lower_bound_env)?;
    let summary = harness::summarize(&records).map_err(usage)?;
    let rows = harness::plot_data(&summary, &env, a.n).map_err(usage)?;
    harness::write_plot_data(output(a.out.as_ref())?, &rows).map_err(runtime)
}

pub fn validate_env(a: ValidateArgs) -> CliResult {
    let env = if a.env.exists() {
        EnvironmentSpec::load(&a.env).map_err(|e| usage(format!("{}: {e}", a.env.display())))?
    } else {
        load_env(&a.env)?
    };
    match env.validate() {
        Ok(Validation::Ok) => {
            println!("ok: K={} change points {:?}", env.num_arms(), env.change_points());
            Ok(())
        }
        Ok(Validation::Warning(ws)) => {
            for w in ws {
                println!("warning: {w}");
            }
            Ok(())
        }
        Err(e) => Err(usage(e)),
    }
}
