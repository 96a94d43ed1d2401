use std::io::Write;

use crate::bounds::proportions_for_gaps;
use crate::env::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::policy::rules::{
    beta_threshold, estimate_change_point, exploration_radius, forced_exploration_action, guard_allows_update,
    tracking_action, z_statistic, GuardRule,
};
use crate::policy::state::RunState;
use crate::rng::{seeded, RunRng};

pub const DEFAULT_STEP_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub delta: f64,
    pub n_targets: usize,
    pub guard_enabled: bool,
    pub guard_rule: GuardRule,
    pub step_cap: Option<u64>,
    pub sigma: f64,
}

impl PolicyConfig {
    /// Config for `env` with the guard off and the default step cap.
    pub fn for_env(env: &EnvironmentSpec, delta: f64, n_targets: usize) -> Self {
        PolicyConfig {
            delta,
            n_targets,
            guard_enabled: false,
            guard_rule: GuardRule::default(),
            step_cap: Some(DEFAULT_STEP_CAP),
            sigma: env.sigma,
        }
    }

    pub fn with_guard(mut self, rule: GuardRule) -> Self {
        self.guard_enabled = true;
        self.guard_rule = rule;
        self
    }

    pub fn with_step_cap(mut self, cap: Option<u64>) -> Self {
        self.step_cap = cap;
        self
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if self.n_targets < 1 || self.n_targets + 1 > k {
            return Err(Error::InvalidConfig(format!(
                "number of targets must lie in 1..={}, got {}",
                k.saturating_sub(1),
                self.n_targets
            )));
        }
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Outcome of one run. `returned` lists change points in the order they were
/// confirmed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    pub tau: u64,
    pub returned: Vec<usize>,
    pub counts: Vec<u64>,
    pub truncated: bool,
    pub seed: u64,
}

/// One played round, with the statistics that chose the action.
/// Statistics are absent during the initial sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    pub phase: usize,
    pub action: usize,
    pub reward: f64,
    pub estimate: Option<usize>,
    pub z: Option<f64>,
    pub beta: Option<f64>,
}

pub trait RoundObserver {
    fn on_round(&mut self, record: &RoundRecord);
}

impl RoundObserver for () {
    fn on_round(&mut self, _: &RoundRecord) {}
}

impl RoundObserver for Vec<RoundRecord> {
    fn on_round(&mut self, record: &RoundRecord) {
        self.push(*record);
    }
}

/// Streams rounds as CSV: `round,phase,action,reward,estimate,z,beta`.
pub struct TrajectoryCsv<W: Write> {
    out: W,
    error: Option<std::io::Error>,
}

impl<W: Write> TrajectoryCsv<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "round,phase,action,reward,estimate,z,beta")?;
        Ok(TrajectoryCsv { out, error: None })
    }

    pub fn finish(mut self) -> Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e.into());
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> RoundObserver for TrajectoryCsv<W> {
    fn on_round(&mut self, r: &RoundRecord) {
        if self.error.is_some() {
            return;
        }
        let opt = |v: Option<f64>| v.map(crate::format::g17).unwrap_or_default();
        let res = writeln!(
            self.out,
            "{},{},{},{},{},{},{}",
            r.round,
            r.phase,
            r.action,
            crate::format::g17(r.reward),
            r.estimate.map(|e| e.to_string()).unwrap_or_default(),
            opt(r.z),
            opt(r.beta),
        );
        if let Err(e) = res {
            self.error = Some(e);
        }
    }
}

/// Single change point identification.
pub fn run_cpi(env: &EnvironmentSpec, config: &PolicyConfig, seed: u64) -> Result<RunResult> {
    run_cpi_observed(env, config, seed, &mut ())
}

pub fn run_cpi_observed(
    env: &EnvironmentSpec,
    config: &PolicyConfig,
    seed: u64,
    observer: &mut dyn RoundObserver,
) -> Result<RunResult> {
    if config.n_targets != 1 {
        return Err(Error::InvalidConfig(format!(
            "CPI looks for exactly one change point, got {} targets",
            config.n_targets
        )));
    }
    if config.guard_enabled {
        return Err(Error::InvalidConfig("CPI has no equal-gap guard".into()));
    }
    Runner::new(env, config, seed, Sampling::Adaptive { guard: None })?.run(observer)
}

/// Multiple change point identification: one change point per phase.
pub fn run_mcpi(env: &EnvironmentSpec, config: &PolicyConfig, seed: u64) -> Result<RunResult> {
    run_mcpi_observed(env, config, seed, &mut ())
}

pub fn run_mcpi_observed(
    env: &EnvironmentSpec,
    config: &PolicyConfig,
    seed: u64,
    observer: &mut dyn RoundObserver,
) -> Result<RunResult> {
    let guard = config.guard_enabled.then_some(config.guard_rule);
    Runner::new(env, config, seed, Sampling::Adaptive { guard })?.run(observer)
}

/// Baseline that knows the true change points and tracks their optimal
/// proportions; it stops with the same statistic and threshold as MCPI.
pub fn run_oracle_tracking(env: &EnvironmentSpec, config: &PolicyConfig, seed: u64) -> Result<RunResult> {
    run_oracle_tracking_observed(env, config, seed, &mut ())
}

pub fn run_oracle_tracking_observed(
    env: &EnvironmentSpec,
    config: &PolicyConfig,
    seed: u64,
    observer: &mut dyn RoundObserver,
) -> Result<RunResult> {
    let m = env.num_change_points();
    if m < config.n_targets {
        return Err(Error::ChangePointCount {
            expected: format!("at least {}", config.n_targets),
            found: m,
        });
    }
    let targets = env.top_gaps(config.n_targets);
    let weights = proportions_for_gaps(&targets, env.num_arms());
    let targets = targets.iter().map(|g| g.index).collect();
    Runner::new(env, config, seed, Sampling::Oracle { weights, targets })?.run(observer)
}

enum Sampling {
    Adaptive { guard: Option<GuardRule> },
    Oracle { weights: Vec<f64>, targets: Vec<usize> },
}

struct Runner<'a> {
    env: &'a EnvironmentSpec,
    config: &'a PolicyConfig,
    sampling: Sampling,
    seed: u64,
    rng: RunRng,
    state: RunState,
}

impl<'a> Runner<'a> {
    fn new(env: &'a EnvironmentSpec, config: &'a PolicyConfig, seed: u64, sampling: Sampling) -> Result<Self> {
        env.validate()?;
        config.validate(env.num_arms())?;
        Ok(Runner {
            env,
            config,
            sampling,
            seed,
            rng: seeded(seed),
            state: RunState::new(env.num_arms()),
        })
    }

    fn run(mut self, observer: &mut dyn RoundObserver) -> Result<RunResult> {
        let k = self.env.num_arms();
        let n = self.config.n_targets;
        let phase_delta = self.config.delta / n as f64;
        let cap = self.config.step_cap.unwrap_or(u64::MAX);

        for arm in 1..=k {
            self.play(arm, None, None, observer)?;
        }

        for _ in 0..n {
            let entry = self.candidate_estimate()?;
            self.state.set_estimate(entry);
            loop {
                let z = z_statistic(&self.state, self.config.sigma)?;
                let beta = beta_threshold(self.state.t(), phase_delta, k)?;
                if z >= beta {
                    break;
                }
                if self.state.t() >= cap {
                    return Ok(self.finish(true));
                }
                let action = self.next_action()?;
                self.play(action, Some(z), Some(beta), observer)?;
                self.update_estimate()?;
            }
            let j = self.state.estimate().expect("estimate set during phase");
            self.state.confirm(j);
        }
        Ok(self.finish(false))
    }

    fn play(&mut self, arm: usize, z: Option<f64>, beta: Option<f64>, observer: &mut dyn RoundObserver) -> Result<()> {
        let reward = self.env.sample_reward(arm, &mut self.rng)?;
        self.state.record(arm, reward);
        observer.on_round(&RoundRecord {
            round: self.state.t(),
            phase: self.state.phase(),
            action: arm,
            reward,
            estimate: self.state.estimate(),
            z,
            beta,
        });
        Ok(())
    }

    fn candidate_estimate(&self) -> Result<usize> {
        match &self.sampling {
            Sampling::Adaptive { .. } => estimate_change_point(&self.state, self.state.candidates()),
            Sampling::Oracle { targets, .. } => {
                let remaining: Vec<usize> = targets
                    .iter()
                    .copied()
                    .filter(|j| !self.state.found().contains(j))
                    .collect();
                estimate_change_point(&self.state, &remaining)
            }
        }
    }

    fn update_estimate(&mut self) -> Result<()> {
        let allowed = match &self.sampling {
            Sampling::Adaptive { guard: Some(rule) } => {
                let r = exploration_radius(self.state.t(), self.env.num_arms());
                guard_allows_update(&self.state, self.state.candidates(), r, *rule)?
            }
            _ => true,
        };
        if allowed {
            let j = self.candidate_estimate()?;
            self.state.set_estimate(j);
        }
        Ok(())
    }

    fn next_action(&self) -> Result<usize> {
        match &self.sampling {
            Sampling::Adaptive { .. } => match forced_exploration_action(&self.state) {
                Some(arm) => Ok(arm),
                None => tracking_action(&self.state),
            },
            Sampling::Oracle { weights, .. } => {
                // cumulative tracking: the supported arm furthest behind t * w
                let next_t = (self.state.t() + 1) as f64;
                let (i, _) = weights
                    .iter()
                    .zip(self.state.counts())
                    .enumerate()
                    .filter(|(_, (w, _))| **w > 0.0)
                    .map(|(i, (w, &c))| (i, next_t * w - c as f64))
                    .fold(
                        (usize::MAX, f64::NEG_INFINITY),
                        |best, cur| {
                            if cur.1 > best.1 {
                                cur
                            } else {
                                best
                            }
                        },
                    );
                Ok(i + 1)
            }
        }
    }

    fn finish(self, truncated: bool) -> RunResult {
        RunResult {
            tau: self.state.t(),
            returned: self.state.found().to_vec(),
            counts: self.state.counts().to_vec(),
            truncated,
            seed: self.seed,
        }
    }
}
