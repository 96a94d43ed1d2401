//! Per-round decision rules: estimation, sampling, stopping, guarding.

use crate::error::{Error, Result};
use crate::policy::state::RunState;

/// Constant inside the stopping threshold, `2 e^3 9^6 / ln 3`.
pub fn gamma() -> f64 {
    2.0 * 3f64.exp() * 9f64.powi(6) / 3f64.ln()
}

/// Which reading of the equal-gap guard to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GuardRule {
    /// The largest empirical gap over the candidate set must beat the
    /// runner-up by more than the radius.
    #[default]
    ClearLeader,
    /// Some gap over all of `[K-1]` exceeds some other gap by more than the
    /// radius (the quantifier as literally written).
    AnyPair,
}

/// Candidate with the largest empirical gap; ties go to the lowest index.
pub fn estimate_change_point(state: &RunState, candidates: &[usize]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in candidates {
        let d = state.empirical_gap(j)?;
        if best.is_none_or(|(_, bd)| d > bd) {
            best = Some((j, d));
        }
    }
    best.map(|(j, _)| j).ok_or(Error::EmptyCandidateSet)
}

/// Least-played arm over all `K` arms when its count is below `sqrt(t)`.
pub fn forced_exploration_action(state: &RunState) -> Option<usize> {
    let (i, &c) = state.counts().iter().enumerate().min_by_key(|&(i, &c)| (c, i))?;
    // c < sqrt(t)  <=>  c^2 < t  for non-negative integers.
    ((c as u128) * (c as u128) < state.t() as u128).then_some(i + 1)
}

/// Less-played arm of the pair straddling the current estimate.
pub fn tracking_action(state: &RunState) -> Result<usize> {
    let j = state.estimate().ok_or(Error::EstimateUndefined)?;
    if state.count(j + 1) < state.count(j) {
        Ok(j + 1)
    } else {
        Ok(j)
    }
}

/// Stopping threshold `ln(x) + 8 ln ln(x)` with `x = t gamma (K-1) / delta`.
pub fn beta_threshold(t: u64, delta: f64, k: usize) -> Result<f64> {
    if t < 1 {
        return Err(Error::Domain("threshold needs t >= 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    if k < 2 {
        return Err(Error::Domain(format!("need K >= 2, got {k}")));
    }
    let log_x = (t as f64).ln() + gamma().ln() + ((k - 1) as f64).ln() - delta.ln();
    Ok(log_x + 8.0 * log_x.ln())
}

/// Generalized likelihood ratio for "a change sits at `j`" against the
/// closest alternative that removes it, using only arms `j` and `j + 1`.
pub fn z_statistic_at(state: &RunState, j: usize, sigma: f64) -> Result<f64> {
    let (na, nb) = (state.count(j), state.count(j + 1));
    if na == 0 {
        return Err(Error::UnplayedArm(j));
    }
    if nb == 0 {
        return Err(Error::UnplayedArm(j + 1));
    }
    let (na, nb) = (na as f64, nb as f64);
    let gap = state.empirical_gap(j)?;
    Ok(na * nb / (2.0 * sigma * sigma * (na + nb)) * gap * gap)
}

/// [`z_statistic_at`] evaluated at the current estimate.
pub fn z_statistic(state: &RunState, sigma: f64) -> Result<f64> {
    let j = state.estimate().ok_or(Error::EstimateUndefined)?;
    z_statistic_at(state, j, sigma)
}

/// Concentration radius used by the guard; `+inf` until `t^{1/4} > K`.
pub fn exploration_radius(t: u64, k: usize) -> f64 {
    if t <= 1 {
        return f64::INFINITY;
    }
    let tf = t as f64;
    let denom = tf.powf(0.25) - k as f64;
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    let numer = 4.0 * tf.ln() + 2.0 * (2.0 * tf.ln()).ln() + 0.5;
    (numer / denom).sqrt()
}

/// Whether the estimate may move this round.
pub fn guard_allows_update(state: &RunState, candidates: &[usize], r: f64, rule: GuardRule) -> Result<bool> {
    match rule {
        GuardRule::ClearLeader => {
            if candidates.len() == 1 {
                return Ok(true);
            }
            if r.is_infinite() {
                return Ok(false);
            }
            let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &j in candidates {
                let d = state.empirical_gap(j)?;
                if d > first {
                    second = first;
                    first = d;
                } else if d > second {
                    second = d;
                }
            }
            Ok(first > second + r)
        }
        GuardRule::AnyPair => {
            if r.is_infinite() {
                return Ok(false);
            }
            let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
            for j in 1..state.num_arms() {
                let d = state.empirical_gap(j)?;
                hi = hi.max(d);
                lo = lo.min(d);
            }
            Ok(hi > lo + r)
        }
    }
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn state(means: &[f64]) -> RunState {
        RunState::from_observations(vec![1; means.len()], means.to_vec())
    }

    fn with_counts(counts: &[u64]) -> RunState {
        RunState::from_observations(counts.to_vec(), vec![0.0; counts.len()])
    }

    #[test]
    fn estimate_picks_largest_gap() {
        assert_eq!(estimate_change_point(&state(&[2.0, 2.0, 1.0]), &[1, 2]).unwrap(), 2);
        assert_eq!(estimate_change_point(&state(&[0.0, 0.0, 0.0]), &[1, 2]).unwrap(), 1);
        let v3 = state(&[2.0, 2.0, 3.0, 3.0, 3.0, 3.0, 1.0, 1.0, 4.0]);
        let all: Vec<usize> = (1..=8).collect();
        assert_eq!(estimate_change_point(&v3, &all).unwrap(), 8);
        assert_eq!(estimate_change_point(&v3, &[1, 2, 3, 4, 5, 6, 7]).unwrap(), 6);
        assert!(matches!(estimate_change_point(&v3, &[]), Err(Error::EmptyCandidateSet)));
    }

    #[test]
    fn forced_exploration_boundary() {
        assert_eq!(forced_exploration_action(&with_counts(&[10; 10])), None);
        let mut counts = vec![10u64; 10];
        counts[9] = 11;
        // t = 101, sqrt(101) ~ 10.0499 > 10
        assert_eq!(forced_exploration_action(&with_counts(&counts)), Some(1));
        // the comparison is strict: 3 < sqrt(9) fails, 3 < sqrt(10) holds
        let mut s = with_counts(&[3, 5]);
        s.record(2, 0.0);
        assert_eq!(s.t(), 9);
        assert_eq!(forced_exploration_action(&s), None);
        s.record(2, 0.0);
        assert_eq!(forced_exploration_action(&s), Some(1));
        assert_eq!(forced_exploration_action(&with_counts(&[4, 2, 2])), Some(2));
    }

    #[test]
    fn tracking_pair() {
        let mut counts = vec![5u64; 9];
        counts[5] = 30;
        counts[6] = 28;
        let mut s = with_counts(&counts);
        assert!(matches!(tracking_action(&s), Err(Error::EstimateUndefined)));
        s.set_estimate(6);
        assert_eq!(tracking_action(&s).unwrap(), 7);

        let mut s = with_counts(&[5, 5, 5, 5, 5, 30, 30, 5, 5]);
        s.set_estimate(6);
        assert_eq!(tracking_action(&s).unwrap(), 6);

        let mut s = with_counts(&[5, 5, 5, 5, 5, 5, 5, 9, 4]);
        s.set_estimate(8);
        assert_eq!(tracking_action(&s).unwrap(), 9);
    }

    #[test]
    fn gamma_value() {
        // 2 e^3 9^6 / ln 3 at 50 digits: 19432292.78990974796455667...
        assert_relative_eq!(gamma(), 19_432_292.789_909_747_964_556_7, max_relative = 1e-12);
    }

    #[test]
    fn beta_reference_value() {
        // direct evaluation at 50 digits: 51.7632212055718887829...
        assert_relative_eq!(
            beta_threshold(100, 0.1, 9).unwrap(),
            51.763_221_205_571_888_8,
            max_relative = 1e-12
        );
    }

    #[test]
    fn beta_domain() {
        assert!(beta_threshold(0, 0.1, 9).is_err());
        assert!(beta_threshold(1, 0.0, 9).is_err());
        assert!(beta_threshold(1, 1.0, 9).is_err());
        assert!(beta_threshold(1, 0.1, 1).is_err());
        assert!(beta_threshold(1, 0.999, 2).unwrap().is_finite());
    }

    #[test]
    fn z_reference_values() {
        let mut s = RunState::from_observations(vec![12, 8], vec![2.5, 1.0]);
        s.set_estimate(1);
        assert_relative_eq!(z_statistic(&s, 1.0).unwrap(), 5.4, max_relative = 1e-12);
        assert_relative_eq!(z_statistic(&s, 2.0).unwrap(), 5.4 / 4.0, max_relative = 1e-12);

        let mut flat = RunState::from_observations(vec![12, 8], vec![1.0, 1.0]);
        flat.set_estimate(1);
        assert_eq!(z_statistic(&flat, 1.0).unwrap(), 0.0);

        let mut doubled = RunState::from_observations(vec![24, 16], vec![2.5, 1.0]);
        doubled.set_estimate(1);
        assert_relative_eq!(z_statistic(&doubled, 1.0).unwrap(), 10.8, max_relative = 1e-12);
    }

    #[test]
    fn z_errors() {
        let s = RunState::from_observations(vec![3, 0], vec![1.0, 0.0]);
        assert!(matches!(z_statistic(&s, 1.0), Err(Error::EstimateUndefined)));
        assert!(matches!(z_statistic_at(&s, 1, 1.0), Err(Error::UnplayedArm(2))));
    }

    #[test]
    fn radius_values() {
        assert!(exploration_radius(1, 9).is_infinite());
        assert!(exploration_radius(9u64.pow(4), 9).is_infinite());
        assert!(exploration_radius(100, 2).is_finite());
        // numerator 46.2378596666983..., denominator 3
        assert_relative_eq!(
            exploration_radius(20_736, 9),
            3.925_890_967_525_644_7,
            max_relative = 1e-10
        );
    }

    #[test]
    fn radius_decreasing_after_warmup() {
        let k = 9usize;
        let start = ((k + 1) as u64).pow(4) + 1;
        let mut prev = exploration_radius(start, k);
        let mut t = start;
        while t < 1_000_000_000 {
            t = t + t / 7 + 1;
            let r = exploration_radius(t, k);
            assert!(r < prev, "radius not decreasing at t = {t}");
            prev = r;
        }
    }

    #[test]
    fn clear_leader_guard() {
        // diffs (1.0, 0.4) and (1.0, 0.9)
        let a = state(&[0.0, 1.0, 1.4]);
        let b = state(&[0.0, 1.0, 1.9]);
        assert!(guard_allows_update(&a, &[1, 2], 0.5, GuardRule::ClearLeader).unwrap());
        assert!(!guard_allows_update(&b, &[1, 2], 0.5, GuardRule::ClearLeader).unwrap());
        assert!(!guard_allows_update(&a, &[1, 2], f64::INFINITY, GuardRule::ClearLeader).unwrap());
        assert!(guard_allows_update(&b, &[2], f64::INFINITY, GuardRule::ClearLeader).unwrap());
    }

    #[test]
    fn any_pair_guard_uses_all_gaps() {
        // gaps (1.0, 0.9, 0.0); S = {1, 2} ties under the clear-leader reading
        let s = state(&[0.0, 1.0, 1.9, 1.9]);
        assert!(!guard_allows_update(&s, &[1, 2], 0.5, GuardRule::ClearLeader).unwrap());
        assert!(guard_allows_update(&s, &[1, 2], 0.5, GuardRule::AnyPair).unwrap());
        assert!(!guard_allows_update(&s, &[1, 2], f64::INFINITY, GuardRule::AnyPair).unwrap());
    }
}
