//! Reproducible Monte Carlo sweeps over confidence levels.
//!
//! Every replication draws its seed from `(base_seed, delta_index,
//! run_index)` alone, so records do not depend on scheduling. With the
//! `parallel` feature and `parallelism > 1`, replications run on a dedicated
//! rayon pool; results are always returned in `(delta_index, run_index)`
//! order.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;

use crate::bounds::lb_any_general;
use crate::env::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::format::g17;
use crate::policy::{run_cpi, run_mcpi, run_oracle_tracking, GuardRule, PolicyConfig, RunResult};
use crate::rng::{derive_seed, seeded};

/// z-quantile for a two-sided 90% interval.
const Z90: f64 = 1.645;

pub const RECORDS_HEADER: &str = "delta,run_index,seed,tau,returned,correct,truncated,wall_time_ms";
pub const SUMMARY_HEADER: &str = "delta,mean_tau,ci90_low,ci90_high,error_rate,n,truncation_count";
pub const PLOT_HEADER: &str = "ln_inv_delta,mean_tau,ci90_low,ci90_high,lower_bound";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Cpi,
    Mcpi,
    Oracle,
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cpi" => Ok(Algorithm::Cpi),
            "mcpi" => Ok(Algorithm::Mcpi),
            "oracle" => Ok(Algorithm::Oracle),
            other => Err(Error::InvalidConfig(format!("unknown algorithm {other:?}"))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Cpi => "cpi",
            Algorithm::Mcpi => "mcpi",
            Algorithm::Oracle => "oracle",
        })
    }
}

/// How a returned set is judged against the true change points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrectnessMode {
    /// Every returned index is a true change point.
    #[default]
    Any,
    /// The returned set equals the true change-point set.
    Exact,
}

/// Whether a run's output counts as correct. Truncated runs never do.
pub fn judge(returned: &[usize], truth: &[usize], truncated: bool, mode: CorrectnessMode) -> bool {
    if truncated {
        return false;
    }
    let contained = returned.iter().all(|j| truth.contains(j));
    match mode {
        CorrectnessMode::Any => contained,
        CorrectnessMode::Exact => contained && truth.iter().all(|j| returned.contains(j)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvironmentSpec,
    pub algorithm: Algorithm,
    pub n_targets: usize,
    pub deltas: Vec<f64>,
    pub replications: usize,
    pub base_seed: u64,
    pub parallelism: usize,
    pub step_cap: u64,
    pub guard: Option<GuardRule>,
    pub mode: CorrectnessMode,
    /// Record wall-clock time per run; off gives byte-stable output.
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn new(
        env: EnvironmentSpec,
        algorithm: Algorithm,
        n_targets: usize,
        deltas: Vec<f64>,
        replications: usize,
    ) -> Self {
        ExperimentConfig {
            env,
            algorithm,
            n_targets,
            deltas,
            replications,
            base_seed: 0,
            parallelism: 1,
            step_cap: crate::policy::DEFAULT_STEP_CAP,
            guard: None,
            mode: CorrectnessMode::Any,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.deltas.is_empty() {
            return Err(Error::InvalidConfig("no confidence levels given".into()));
        }
        if let Some(d) = self.deltas.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
            return Err(Error::InvalidConfig(format!("delta must lie in (0, 1), got {d}")));
        }
        if self.replications < 1 {
            return Err(Error::InvalidConfig("need at least one replication".into()));
        }
        if self.parallelism < 1 {
            return Err(Error::InvalidConfig("parallelism must be at least 1".into()));
        }
        if self.algorithm == Algorithm::Cpi && (self.n_targets != 1 || self.guard.is_some()) {
            return Err(Error::InvalidConfig("cpi takes one target and no guard".into()));
        }
        for &d in &self.deltas {
            self.policy_config(d).validate(self.env.num_arms())?;
        }
        Ok(())
    }

    pub fn policy_config(&self, delta: f64) -> PolicyConfig {
        let mut cfg = PolicyConfig::for_env(&self.env, delta, self.n_targets).with_step_cap(Some(self.step_cap));
        if let Some(rule) = self.guard {
            cfg = cfg.with_guard(rule);
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub delta: f64,
    pub run_index: usize,
    pub seed: u64,
    pub tau: u64,
    pub returned: Vec<usize>,
    pub correct: bool,
    pub truncated: bool,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub delta: f64,
    pub mean_tau: f64,
    pub ci90_low: f64,
    pub ci90_high: f64,
    pub error_rate: f64,
    pub n: usize,
    pub truncation_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CiMethod {
    /// `mean +- 1.645 s / sqrt(n)`.
    #[default]
    Normal,
    /// Percentile bootstrap of the mean.
    Bootstrap { resamples: usize, seed: u64 },
}

/// Runs one replication. The seed fully determines the outcome.
pub fn run_single(config: &ExperimentConfig, delta: f64, seed: u64) -> Result<RunResult> {
    let policy = config.policy_config(delta);
    match config.algorithm {
        Algorithm::Cpi => run_cpi(&config.env, &policy, seed),
        Algorithm::Mcpi => run_mcpi(&config.env, &policy, seed),
        Algorithm::Oracle => run_oracle_tracking(&config.env, &policy, seed),
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    config.validate()?;
    let truth = config.env.change_points();
    let jobs: Vec<(usize, usize)> = (0..config.deltas.len())
        .flat_map(|d| (0..config.replications).map(move |r| (d, r)))
        .collect();

    let job = |(di, ri): (usize, usize)| -> Result<ExperimentRecord> {
        let delta = config.deltas[di];
        let seed = derive_seed(config.base_seed, di, ri);
        let start = Instant::now();
        let result = run_single(config, delta, seed)?;
        let wall_time_ms = if config.timing {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        Ok(ExperimentRecord {
            delta,
            run_index: ri,
            seed,
            tau: result.tau,
            correct: judge(&result.returned, &truth, result.truncated, config.mode),
            returned: result.returned,
            truncated: result.truncated,
            wall_time_ms,
        })
    };

    execute(jobs, config.parallelism, job).into_iter().collect()
}

#[cfg(feature = "parallel")]
fn execute<T, F>(jobs: Vec<(usize, usize)>, parallelism: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn((usize, usize)) -> T + Sync + Send,
{
    use rayon::prelude::*;

    if parallelism <= 1 {
        return jobs.into_iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
        Ok(pool) => pool.install(|| jobs.into_par_iter().map(f).collect()),
        Err(_) => jobs.into_iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn execute<T, F>(jobs: Vec<(usize, usize)>, _parallelism: usize, f: F) -> Vec<T>
where
    F: Fn((usize, usize)) -> T,
{
    jobs.into_iter().map(f).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn summarize(records: &[ExperimentRecord]) -> Result<Vec<SummaryRow>> {
    summarize_with(records, CiMethod::Normal)
}

/// One row per distinct delta, in order of first appearance.
pub fn summarize_with(records: &[ExperimentRecord], ci: CiMethod) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::Schema("no records to summarize".into()));
    }
    let mut deltas: Vec<f64> = Vec::new();
    for r in records {
        if !deltas.contains(&r.delta) {
            deltas.push(r.delta);
        }
    }
    Ok(deltas
        .into_iter()
        .map(|delta| {
            let group: Vec<&ExperimentRecord> = records.iter().filter(|r| r.delta == delta).collect();
            let taus: Vec<f64> = group.iter().map(|r| r.tau as f64).collect();
            let n = taus.len();
            let m = mean(&taus);
            let (lo, hi) = match ci {
                CiMethod::Normal => {
                    let half = Z90 * sample_sd(&taus) / (n as f64).sqrt();
                    (m - half, m + half)
                }
                CiMethod::Bootstrap { resamples, seed } => bootstrap_ci(&taus, resamples, seed),
            };
            SummaryRow {
                delta,
                mean_tau: m,
                ci90_low: lo.min(m),
                ci90_high: hi.max(m),
                error_rate: group.iter().filter(|r| !r.correct).count() as f64 / n as f64,
                n,
                truncation_count: group.iter().filter(|r| r.truncated).count(),
            }
        })
        .collect())
}

fn bootstrap_ci(xs: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    if xs.len() < 2 || resamples == 0 {
        let m = mean(xs);
        return (m, m);
    }
    let mut rng = seeded(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..xs.len()).map(|_| xs[rng.random_range(0..xs.len())]).sum::<f64>() / xs.len() as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| means[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (at(0.05), at(0.95))
}

/// Least-squares slope of mean stopping time against `ln(1/delta)`.
pub fn slope_vs_log_inv_delta(summary: &[SummaryRow]) -> Result<f64> {
    let xs: Vec<f64> = summary.iter().map(|r| (1.0 / r.delta).ln()).collect();
    let ys: Vec<f64> = summary.iter().map(|r| r.mean_tau).collect();
    slope(&xs, &ys)
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let mut distinct = xs.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if xs.len() != ys.len() || distinct.len() < 2 {
        return Err(Error::Domain(
            "slope needs at least two distinct confidence levels".into(),
        ));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub ln_inv_delta: f64,
    pub mean_tau: f64,
    pub ci90_low: f64,
    pub ci90_high: f64,
    pub lower_bound: f64,
}

/// Figure series: mean stopping time with its interval next to the any-`N`
/// lower bound, sorted by increasing `ln(1/delta)`.
pub fn plot_data(summary: &[SummaryRow], env: &EnvironmentSpec, n_targets: usize) -> Result<Vec<PlotRow>> {
    let mut rows = summary
        .iter()
        .map(|s| {
            Ok(PlotRow {
                ln_inv_delta: (1.0 / s.delta).ln(),
                mean_tau: s.mean_tau,
                ci90_low: s.ci90_low,
                ci90_high: s.ci90_high,
                lower_bound: lb_any_general(env, env.sigma, s.delta, n_targets)?.value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.ln_inv_delta.total_cmp(&b.ln_inv_delta));
    Ok(rows)
}

fn flag(b: bool) -> u8 {
    u8::from(b)
}

pub fn write_records<W: Write>(mut out: W, records: &[ExperimentRecord]) -> Result<()> {
    writeln!(out, "{RECORDS_HEADER}")?;
    for r in records {
        let returned: Vec<String> = r.returned.iter().map(|j| j.to_string()).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            g17(r.delta),
            r.run_index,
            r.seed,
            r.tau,
            returned.join(";"),
            flag(r.correct),
            flag(r.truncated),
            g17(r.wall_time_ms),
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(mut out: W, rows: &[SummaryRow]) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            g17(r.delta),
            g17(r.mean_tau),
            g17(r.ci90_low),
            g17(r.ci90_high),
            g17(r.error_rate),
            r.n,
            r.truncation_count,
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_plot_data<W: Write>(mut out: W, rows: &[PlotRow]) -> Result<()> {
    writeln!(out, "{PLOT_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            g17(r.ln_inv_delta),
            g17(r.mean_tau),
            g17(r.ci90_low),
            g17(r.ci90_high),
            g17(r.lower_bound),
        )?;
    }
    out.flush()?;
    Ok(())
}

fn parse_field<T: FromStr>(line: usize, name: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::Schema(format!("line {line}: bad {name} value {raw:?}")))
}

fn parse_flag(line: usize, name: &str, raw: &str) -> Result<bool> {
    match raw.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::Schema(format!(
            "line {line}: {name} must be 0 or 1, got {raw:?}"
        ))),
    }
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<ExperimentRecord>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Schema("empty records file".into()))?;
    if header.trim() != RECORDS_HEADER {
        return Err(Error::Schema(format!("unexpected header {header:?}")));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::Schema(format!(
                "line {lineno}: expected 8 fields, got {}",
                f.len()
            )));
        }
        let returned = if f[4].trim().is_empty() {
            Vec::new()
        } else {
            f[4].split(';')
                .map(|s| parse_field(lineno, "returned", s))
                .collect::<Result<Vec<usize>>>()?
        };
        records.push(ExperimentRecord {
            delta: parse_field(lineno, "delta", f[0])?,
            run_index: parse_field(lineno, "run_index", f[1])?,
            seed: parse_field(lineno, "seed", f[2])?,
            tau: parse_field(lineno, "tau", f[3])?,
            returned,
            correct: parse_flag(lineno, "correct", f[5])?,
            truncated: parse_flag(lineno, "truncated", f[6])?,
            wall_time_ms: parse_field(lineno, "wall_time_ms", f[7])?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn record(delta: f64, tau: u64, correct: bool) -> ExperimentRecord {
        ExperimentRecord {
            delta,
            run_index: 0,
            seed: 0,
            tau,
            returned: vec![6],
            correct,
            truncated: false,
            wall_time_ms: 0.0,
        }
    }

    fn small_config() -> ExperimentConfig {
        let env = EnvironmentSpec::bundled("v1").unwrap();
        let mut cfg = ExperimentConfig::new(env, Algorithm::Mcpi, 1, vec![0.1, 0.01], 3);
        cfg.base_seed = 11;
        cfg
    }

    #[test]
    fn record_cardinality_and_order() {
        let recs = run_experiment(&small_config()).unwrap();
        assert_eq!(recs.len(), 6);
        let keys: Vec<(f64, usize)> = recs.iter().map(|r| (r.delta, r.run_index)).collect();
        assert_eq!(
            keys,
            vec![(0.1, 0), (0.1, 1), (0.1, 2), (0.01, 0), (0.01, 1), (0.01, 2)]
        );
        assert_eq!(recs[4].seed, derive_seed(11, 1, 1));
    }

    #[test]
    fn experiment_replays() {
        let cfg = small_config();
        assert_eq!(run_experiment(&cfg).unwrap(), run_experiment(&cfg).unwrap());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small_config();
        cfg.deltas.clear();
        assert!(run_experiment(&cfg).is_err());
        let mut cfg = small_config();
        cfg.deltas = vec![0.1, 1.0];
        assert!(run_experiment(&cfg).is_err());
        let mut cfg = small_config();
        cfg.replications = 0;
        assert!(run_experiment(&cfg).is_err());
        let mut cfg = small_config();
        cfg.algorithm = Algorithm::Cpi;
        cfg.n_targets = 2;
        assert!(run_experiment(&cfg).is_err());
    }

    #[test]
    fn summary_statistics() {
        let recs = vec![record(0.1, 10, true), record(0.1, 20, false), record(0.1, 30, true)];
        let s = summarize(&recs).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].mean_tau, 20.0);
        assert_relative_eq!(s[0].error_rate, 1.0 / 3.0);
        // s = 10, half width 1.645 * 10 / sqrt(3)
        assert_relative_eq!(s[0].ci90_high - 20.0, 1.645 * 10.0 / 3f64.sqrt(), max_relative = 1e-12);

        let one = summarize(&[record(0.1, 42, true)]).unwrap();
        assert_eq!((one[0].ci90_low, one[0].ci90_high), (42.0, 42.0));
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn normal_half_width() {
        // 100 values with sample sd exactly 50
        let d = 50.0 * (99f64 / 100.0).sqrt();
        let taus: Vec<f64> = (0..100)
            .map(|i| if i % 2 == 0 { 1000.0 + d } else { 1000.0 - d })
            .collect();
        assert_relative_eq!(sample_sd(&taus), 50.0, max_relative = 1e-12);
        assert_relative_eq!(Z90 * sample_sd(&taus) / 10.0, 8.225, max_relative = 1e-12);
    }

    #[test]
    fn bootstrap_contains_mean() {
        let recs: Vec<ExperimentRecord> = (0..40).map(|i| record(0.1, 100 + (i * 37) % 50, true)).collect();
        let s = summarize_with(
            &recs,
            CiMethod::Bootstrap {
                resamples: 2000,
                seed: 1,
            },
        )
        .unwrap();
        assert!(s[0].ci90_low < s[0].mean_tau && s[0].mean_tau < s[0].ci90_high);
        let normal = summarize(&recs).unwrap();
        let (wb, wn) = (s[0].ci90_high - s[0].ci90_low, normal[0].ci90_high - normal[0].ci90_low);
        assert!((wb / wn - 1.0).abs() < 0.2);
    }

    #[test]
    fn slopes() {
        let row = |delta: f64, tau: f64| SummaryRow {
            delta,
            mean_tau: tau,
            ci90_low: tau,
            ci90_high: tau,
            error_rate: 0.0,
            n: 1,
            truncation_count: 0,
        };
        let e = std::f64::consts::E;
        let s = slope_vs_log_inv_delta(&[row(1.0 / e, 10.0), row(1.0 / (e * e), 18.0)]).unwrap();
        assert_relative_eq!(s, 8.0, max_relative = 1e-12);
        let flat = slope_vs_log_inv_delta(&[row(0.1, 5.0), row(0.01, 5.0), row(0.001, 5.0)]).unwrap();
        assert_eq!(flat, 0.0);
        assert!(slope_vs_log_inv_delta(&[row(0.1, 5.0)]).is_err());
        assert!(slope_vs_log_inv_delta(&[row(0.1, 5.0), row(0.1, 6.0)]).is_err());
    }

    #[test]
    fn judging() {
        let truth = [6, 13];
        assert!(judge(&[13], &truth, false, CorrectnessMode::Any));
        assert!(!judge(&[13], &truth, false, CorrectnessMode::Exact));
        assert!(judge(&[13, 6], &truth, false, CorrectnessMode::Exact));
        assert!(!judge(&[5], &truth, false, CorrectnessMode::Any));
        assert!(!judge(&[6, 13], &truth, true, CorrectnessMode::Any));
    }

    #[test]
    fn csv_round_trip() {
        let mut recs = run_experiment(&small_config()).unwrap();
        recs[0].truncated = true;
        recs[0].returned.clear();
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn csv_schema_errors() {
        assert!(matches!(read_records("".as_bytes()), Err(Error::Schema(_))));
        assert!(matches!(read_records("a,b\n".as_bytes()), Err(Error::Schema(_))));
        let bad = format!("{RECORDS_HEADER}\n0.1,0,1,10,6,2,0,0\n");
        assert!(matches!(read_records(bad.as_bytes()), Err(Error::Schema(_))));
        let short = format!("{RECORDS_HEADER}\n0.1,0,1\n");
        assert!(matches!(read_records(short.as_bytes()), Err(Error::Schema(_))));
    }

    #[test]
    fn plot_rows_sorted_with_bounds() {
        let env = EnvironmentSpec::bundled("v1").unwrap();
        let recs = vec![record(0.001, 100, true), record(0.1, 50, true), record(0.01, 80, true)];
        let rows = plot_data(&summarize(&recs).unwrap(), &env, 1).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.windows(2).all(|w| w[0].ln_inv_delta < w[1].ln_inv_delta));
        for r in &rows {
            let delta = (-r.ln_inv_delta).exp();
            let lb = lb_any_general(&env, 1.0, delta, 1).unwrap().value;
            assert_relative_eq!(r.lower_bound, lb, max_relative = 1e-12);
        }
    }
}
