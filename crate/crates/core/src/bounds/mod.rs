//! Lower bounds on expected sample complexity, optimal sampling
//! proportions, and the horizons that appear in the MCPI upper bound.
//!
//! All logarithms are natural. Bound values are in expected samples.

mod numeric;

use std::fmt;

use serde::Serialize;

use crate::env::{EnvironmentSpec, Gap};
use crate::error::{Error, Result};
use crate::policy::{beta_threshold, exploration_radius};

pub use numeric::{numeric_c_star_single, numeric_c_star_single_with, NumericCStar, SimplexSearch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TheoremId {
    /// Single change, exact identification.
    #[serde(rename = "Thm1/Cor1")]
    Cor1,
    /// Exact identification of all `N` changes (relaxed constant).
    #[serde(rename = "Thm2")]
    Thm2,
    /// Any-`N` identification when `m = N`.
    #[serde(rename = "Thm3")]
    Thm3,
    /// Any-`N` identification with `m >= N` changes.
    #[serde(rename = "Thm4")]
    Thm4,
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TheoremId::Cor1 => "Thm1/Cor1",
            TheoremId::Thm2 => "Thm2",
            TheoremId::Thm3 => "Thm3",
            TheoremId::Thm4 => "Thm4",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub theorem_id: TheoremId,
    /// Raw bound; may be negative for [`TheoremId::Thm4`].
    pub value: f64,
    pub components: Vec<(String, f64)>,
    /// Set when `delta >= 1/4`, where `ln(1/(4 delta)) <= 0`.
    pub vacuous: bool,
}

impl BoundReport {
    /// Value clamped at zero for display.
    pub fn display_value(&self) -> f64 {
        self.value.max(0.0)
    }
}

fn check_delta(delta: f64) -> Result<bool> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(delta >= 0.25)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

fn single_gap(env: &EnvironmentSpec) -> Result<f64> {
    match env.gaps().as_slice() {
        [g] => Ok(g.size),
        gaps => Err(Error::ChangePointCount {
            expected: "exactly 1".into(),
            found: gaps.len(),
        }),
    }
}

fn inverse_square_sum<'a>(gaps: impl IntoIterator<Item = &'a f64>) -> f64 {
    gaps.into_iter().map(|g| 1.0 / (g * g)).sum()
}

fn nonempty_gaps(env: &EnvironmentSpec) -> Result<Vec<f64>> {
    let gaps = env.sorted_gaps();
    if gaps.is_empty() {
        return Err(Error::ChangePointCount {
            expected: "at least 1".into(),
            found: 0,
        });
    }
    Ok(gaps)
}

/// Characteristic constant `8 sigma^2 / Delta^2` of a single-change environment.
pub fn c_star_single(env: &EnvironmentSpec, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let gap = single_gap(env)?;
    Ok(8.0 * sigma * sigma / (gap * gap))
}

/// `c*(v) ln(1/(4 delta))` for a single change.
pub fn lb_single(env: &EnvironmentSpec, sigma: f64, delta: f64) -> Result<BoundReport> {
    let vacuous = check_delta(delta)?;
    let c = c_star_single(env, sigma)?;
    let log_term = (1.0 / (4.0 * delta)).ln();
    Ok(BoundReport {
        theorem_id: TheoremId::Cor1,
        value: c * log_term,
        components: vec![("c_star".into(), c), ("log_term".into(), log_term)],
        vacuous,
    })
}

fn scaled_sum_bound(id: TheoremId, factor: f64, env: &EnvironmentSpec, sigma: f64, delta: f64) -> Result<BoundReport> {
    let vacuous = check_delta(delta)?;
    check_sigma(sigma)?;
    let gaps = nonempty_gaps(env)?;
    let log_term = (1.0 / (4.0 * delta)).ln();
    let inv = inverse_square_sum(&gaps);
    Ok(BoundReport {
        theorem_id: id,
        value: factor * sigma * sigma * log_term * inv,
        components: vec![("log_term".into(), log_term), ("inverse_gap_sum".into(), inv)],
        vacuous,
    })
}

/// `4 sigma^2 ln(1/(4 delta)) sum 1/Delta_i^2` over every change point.
pub fn lb_exact_n(env: &EnvironmentSpec, sigma: f64, delta: f64) -> Result<BoundReport> {
    scaled_sum_bound(TheoremId::Thm2, 4.0, env, sigma, delta)
}

/// `8 sigma^2 ln(1/(4 delta)) sum 1/Delta_i^2` over every change point.
pub fn lb_any_exact_n(env: &EnvironmentSpec, sigma: f64, delta: f64) -> Result<BoundReport> {
    scaled_sum_bound(TheoremId::Thm3, 8.0, env, sigma, delta)
}

/// `8 sigma^2 (1 - delta) ln(1/(4 delta)) sum_{i <= N} 1/Delta_(i)^2
///  - ln 2 sum_{i <= m} 1/Delta_i^2`.
pub fn lb_any_general(env: &EnvironmentSpec, sigma: f64, delta: f64, n: usize) -> Result<BoundReport> {
    let vacuous = check_delta(delta)?;
    check_sigma(sigma)?;
    let gaps = nonempty_gaps(env)?;
    if n == 0 || n > gaps.len() {
        return Err(Error::ChangePointCount {
            expected: format!("at least {n}"),
            found: gaps.len(),
        });
    }
    let log_term = (1.0 / (4.0 * delta)).ln();
    let leading = 8.0 * sigma * sigma * (1.0 - delta) * log_term * inverse_square_sum(&gaps[..n]);
    let correction = 2f64.ln() * inverse_square_sum(&gaps);
    Ok(BoundReport {
        theorem_id: TheoremId::Thm4,
        value: leading - correction,
        components: vec![("leading".into(), leading), ("log2_correction".into(), -correction)],
        vacuous,
    })
}

/// Per-arm proportions putting `1/Delta_j^2 / (2 sum 1/Delta_i^2)` on both
/// neighbours of every listed change point.
pub fn proportions_for_gaps(gaps: &[Gap], k: usize) -> Vec<f64> {
    let total = inverse_square_sum(gaps.iter().map(|g| &g.size));
    let mut w = vec![0.0; k];
    for g in gaps {
        let share = 1.0 / (g.size * g.size) / (2.0 * total);
        w[g.index - 1] += share;
        w[g.index] += share;
    }
    w
}

/// Optimal sampling proportions over all change points of `env`.
pub fn optimal_proportions(env: &EnvironmentSpec) -> Result<Vec<f64>> {
    let gaps = env.gaps();
    if gaps.is_empty() {
        return Err(Error::ChangePointCount {
            expected: "at least 1".into(),
            found: 0,
        });
    }
    Ok(proportions_for_gaps(&gaps, env.num_arms()))
}

/// Horizons of the MCPI expected-stopping-time bound. `None` means no
/// horizon exists (fewer than `N` changes) or it exceeds `2^120`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Horizons {
    pub t0_prime: Option<u128>,
    pub t1_prime: Option<u128>,
    /// `T0' + T1' + 2 e K`.
    pub expected_tau_bound: Option<f64>,
}

const SEARCH_LIMIT: u128 = 1 << 120;

/// Smallest `T >= lower` with `pred(T)`, assuming `pred` flips from false to
/// true once. Past `2^53` adjacent candidates share an `f64` image, so
/// minimality there holds only up to float resolution.
pub fn first_true(lower: u128, pred: impl Fn(u128) -> bool) -> Option<u128> {
    if pred(lower) {
        return Some(lower);
    }
    let mut lo = lower;
    let mut hi = lower.max(1);
    loop {
        hi = hi.checked_mul(2)?;
        if hi > SEARCH_LIMIT {
            return None;
        }
        if pred(hi) {
            break;
        }
        lo = hi;
    }
    // pred(lo) false, pred(hi) true
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

fn radius(t: u128, k: usize) -> f64 {
    match u64::try_from(t) {
        Ok(t) => exploration_radius(t, k),
        Err(_) => {
            let tf = t as f64;
            let denom = tf.powf(0.25) - k as f64;
            ((4.0 * tf.ln() + 2.0 * (2.0 * tf.ln()).ln() + 0.5) / denom).sqrt()
        }
    }
}

fn beta(t: u128, delta: f64, k: usize) -> f64 {
    match u64::try_from(t) {
        Ok(t) => beta_threshold(t, delta, k).expect("arguments checked"),
        Err(_) => {
            let log_x = (t as f64).ln() + crate::policy::gamma().ln() + ((k - 1) as f64).ln() - delta.ln();
            log_x + 8.0 * log_x.ln()
        }
    }
}

/// The forced-exploration horizon `T1'` and the tracking horizon `T0'`.
/// Gaps are measured in units of `sigma`.
pub fn horizon_diagnostics(env: &EnvironmentSpec, sigma: f64, delta: f64, n: usize) -> Result<Horizons> {
    check_delta(delta)?;
    check_sigma(sigma)?;
    if env.num_arms() < 2 {
        return Err(Error::InvalidEnvironment("need at least 2 arms".into()));
    }
    let k = env.num_arms();
    let gaps: Vec<f64> = env.sorted_gaps().iter().map(|g| g / sigma).collect();
    if n == 0 || n > gaps.len() {
        return Ok(Horizons {
            t0_prime: None,
            t1_prime: None,
            expected_tau_bound: None,
        });
    }
    let top = &gaps[..n];
    let gap_n = gaps[n - 1];
    let gap_l = gaps[n..].iter().copied().find(|&g| g < gap_n).unwrap_or(0.0);

    let separation = (gap_n - gap_l) / 4.0;
    let t1 = first_true(1, |t| radius(t, k) < separation);

    let phase_delta = delta / n as f64;
    let t0 = first_true(1, |t| {
        let r = radius(t, k);
        if !r.is_finite() || top.iter().any(|&g| g - 2.0 * r <= 0.0) {
            return false;
        }
        let tf = t as f64;
        let b = beta(t, phase_delta, k);
        let rhs: f64 = top.iter().map(|&g| 8.0 * b / (g - 2.0 * r).powi(2)).sum();
        tf - 2.0 * k as f64 * tf.sqrt() >= rhs
    });

    let bound = match (t0, t1) {
        (Some(a), Some(b)) => Some(a as f64 + b as f64 + 2.0 * std::f64::consts::E * k as f64),
        _ => None,
    };
    Ok(Horizons {
        t0_prime: t0,
        t1_prime: t1,
        expected_tau_bound: bound,
    })
}

/// Ratio of best-arm identification complexity (`K sigma^2 / Delta^2`) to
/// change-point identification complexity (`sigma^2 / Delta^2`) on an
/// environment `(mu, ..., mu, mu + Delta)` with `Delta > 0`.
pub fn bai_complexity_ratio(env: &EnvironmentSpec, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let k = env.num_arms();
    if k < 2 {
        return Err(Error::NotBestArmShape);
    }
    let base = env.means[0];
    let last = env.means[k - 1];
    if env.means[..k - 1].iter().any(|&m| m != base) || last.is_nan() || last <= base {
        return Err(Error::NotBestArmShape);
    }
    // K sigma^2 / Delta^2 over sigma^2 / Delta^2; the instance factors cancel.
    Ok(k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(name: &str) -> EnvironmentSpec {
        EnvironmentSpec::bundled(name).unwrap()
    }

    fn step(k: usize, at: usize, gap: f64) -> EnvironmentSpec {
        let means = (1..=k).map(|i| if i <= at { 0.0 } else { gap }).collect();
        EnvironmentSpec::new(means, 1.0)
    }

    #[test]
    fn c_star_values() {
        assert_relative_eq!(c_star_single(&step(5, 2, 1.0), 1.0).unwrap(), 8.0);
        assert_relative_eq!(c_star_single(&step(5, 2, 2.0), 1.0).unwrap(), 2.0);
        assert_relative_eq!(c_star_single(&step(5, 2, 1.0), 2.0).unwrap(), 32.0);
        assert!(c_star_single(&v("v2"), 1.0).is_err());
        assert!(c_star_single(&EnvironmentSpec::new(vec![1.0, 1.0], 1.0), 1.0).is_err());
    }

    #[test]
    fn theorem_two_values() {
        // 4 ln 25 (1 + 1/4 + 1/9) = 17.5249906020602...
        let r = lb_exact_n(&v("v3"), 1.0, 0.01).unwrap();
        assert_relative_eq!(r.value, 17.524_990_602_060_204, max_relative = 1e-12);
        assert!(!r.vacuous);
        // 4 ln 10
        let r = lb_exact_n(&step(4, 2, 1.0), 1.0, 0.025).unwrap();
        assert_relative_eq!(r.value, 9.210_340_371_976_183, max_relative = 1e-12);
    }

    #[test]
    fn theorem_three_values() {
        // 8 ln 10
        let r = lb_any_exact_n(&v("v1"), 1.0, 0.025).unwrap();
        assert_relative_eq!(r.value, 18.420_680_743_952_367, max_relative = 1e-12);
        // 8 ln 25 (1/4 + 1/16)
        let r = lb_any_exact_n(&v("v2"), 1.0, 0.01).unwrap();
        assert_relative_eq!(r.value, 8.047_189_562_170_502, max_relative = 1e-12);
        let doubled = EnvironmentSpec::new(v("v2").means.iter().map(|m| 2.0 * m).collect(), 1.0);
        let r2 = lb_any_exact_n(&doubled, 1.0, 0.01).unwrap();
        assert_relative_eq!(r2.value * 4.0, r.value, max_relative = 1e-12);
    }

    #[test]
    fn theorem_two_is_half_theorem_three() {
        for name in ["v1", "v2", "v3", "v4"] {
            for delta in [0.2, 0.01, 1e-6] {
                let a = lb_exact_n(&v(name), 1.3, delta).unwrap().value;
                let b = lb_any_exact_n(&v(name), 1.3, delta).unwrap().value;
                assert_eq!(a, b / 2.0);
            }
        }
    }

    #[test]
    fn theorem_four_values() {
        // 8 (0.99) ln 25 - 29 ln 2 = 25.4934965... - 20.1012682... = 5.3922282967...
        let r = lb_any_general(&v("v4"), 1.0, 0.01, 1).unwrap();
        assert_relative_eq!(r.value, 5.392_228_296_717_736, max_relative = 1e-10);
        assert_relative_eq!(r.components[0].1, 25.493_496_532_956_15, max_relative = 1e-12);
        assert_relative_eq!(r.components[1].1, -20.101_268_236_238_414, max_relative = 1e-12);
        assert!(lb_any_general(&v("v1"), 1.0, 0.01, 2).is_err());
    }

    #[test]
    fn theorem_four_negative_is_kept_raw() {
        let r = lb_any_general(&v("v4"), 1.0, 0.2, 1).unwrap();
        assert!(r.value < 0.0);
        assert_eq!(r.display_value(), 0.0);
    }

    #[test]
    fn theorem_four_limits() {
        for name in ["v1", "v2", "v3"] {
            let env = v(name);
            let m = env.num_change_points();
            let exact = lb_any_exact_n(&env, 1.0, 0.05).unwrap().value;
            assert!(lb_any_general(&env, 1.0, 0.05, m).unwrap().value <= exact);
        }
        let env = v("v4");
        let mut prev = f64::INFINITY;
        for e in [5, 20, 80, 300] {
            let delta = 10f64.powi(-e);
            let general = lb_any_general(&env, 1.0, delta, 1).unwrap().value;
            let top = 8.0 * (1.0 / (4.0 * delta)).ln();
            let gap = (general / top - 1.0).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 0.02);
    }

    #[test]
    fn vacuous_flag() {
        let r = lb_any_exact_n(&v("v1"), 1.0, 0.3).unwrap();
        assert!(r.vacuous);
        assert!(r.value < 0.0);
        assert!(lb_any_exact_n(&v("v1"), 1.0, 1.5).is_err());
    }

    #[test]
    fn bounds_scale_with_sigma_squared() {
        let env = v("v3");
        let a = lb_exact_n(&env, 1.0, 0.01).unwrap().value;
        let b = lb_exact_n(&env, 2.0, 0.01).unwrap().value;
        assert_relative_eq!(b, 4.0 * a, max_relative = 1e-12);
        let a = lb_any_general(&env, 1.0, 0.01, 2).unwrap().components[0].1;
        let b = lb_any_general(&env, 2.0, 0.01, 2).unwrap().components[0].1;
        assert_relative_eq!(b, 4.0 * a, max_relative = 1e-12);
    }

    #[test]
    fn proportions() {
        let w = optimal_proportions(&v("v1")).unwrap();
        assert_eq!(w, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0]);

        let w = optimal_proportions(&v("v2")).unwrap();
        for (i, &x) in w.iter().enumerate() {
            let want = match i + 1 {
                6 | 7 => 0.4,
                13 | 14 => 0.1,
                _ => 0.0,
            };
            assert_relative_eq!(x, want, epsilon = 1e-15);
        }
        assert!(optimal_proportions(&EnvironmentSpec::new(vec![3.0; 4], 1.0)).is_err());
    }

    #[test]
    fn t1_prime_reference() {
        // r(5000) = 2.5055 fails, r(8000) = 2.38 holds; 50-digit search gives 5104
        let env = EnvironmentSpec::new(vec![0.0, 10.0], 1.0);
        let h = horizon_diagnostics(&env, 1.0, 0.1, 1).unwrap();
        let t1 = h.t1_prime.unwrap();
        assert!(t1 > 5000 && t1 < 8000);
        assert_eq!(t1, 5104);
        assert!(radius(t1, 2) < 2.5);
        assert!(radius(t1 - 1, 2) >= 2.5);
    }

    #[test]
    fn t0_prime_is_minimal() {
        let env = v("v1");
        let h = horizon_diagnostics(&env, 1.0, 0.1, 1).unwrap();
        let t0 = h.t0_prime.unwrap();
        let holds = |t: u128| {
            let r = radius(t, 9);
            let tf = t as f64;
            r.is_finite()
                && 1.0 - 2.0 * r > 0.0
                && tf - 18.0 * tf.sqrt() >= 8.0 * beta(t, 0.1, 9) / (1.0 - 2.0 * r).powi(2)
        };
        assert!(holds(t0));
        assert!(!holds(t0 - 1));
        let bound = h.expected_tau_bound.unwrap();
        let t1 = h.t1_prime.unwrap();
        assert_relative_eq!(bound, (t0 + t1) as f64 + 2.0 * std::f64::consts::E * 9.0);
    }

    #[test]
    fn t1_prime_shrinks_with_separation() {
        let a = EnvironmentSpec::new(vec![0.0, 0.0, 3.0, 3.0, 2.0, 2.0], 1.0);
        let b = EnvironmentSpec::new(vec![0.0, 0.0, 3.0, 3.0, 2.5, 2.5], 1.0);
        let ta = horizon_diagnostics(&a, 1.0, 0.1, 1).unwrap().t1_prime.unwrap();
        let tb = horizon_diagnostics(&b, 1.0, 0.1, 1).unwrap().t1_prime.unwrap();
        assert!(tb < ta);
    }

    #[test]
    fn horizons_absent_without_enough_changes() {
        let h = horizon_diagnostics(&v("v1"), 1.0, 0.1, 2).unwrap();
        assert_eq!(h.t0_prime, None);
        assert_eq!(h.t1_prime, None);
    }

    #[test]
    fn bai_ratio() {
        let shape = |k: usize, gap: f64| {
            let mut m = vec![1.0; k];
            m[k - 1] += gap;
            EnvironmentSpec::new(m, 1.0)
        };
        assert_eq!(bai_complexity_ratio(&shape(10, 1.0), 1.0).unwrap(), 10.0);
        assert_eq!(bai_complexity_ratio(&shape(2, 1.0), 1.0).unwrap(), 2.0);
        assert_eq!(bai_complexity_ratio(&shape(7, 0.3), 4.0).unwrap(), 7.0);
        assert!(bai_complexity_ratio(&v("v1"), 1.0).is_err());
        assert!(bai_complexity_ratio(&shape(4, -1.0), 1.0).is_err());
    }
}
