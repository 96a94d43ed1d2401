//! Brute-force evaluation of the single-change sup-inf problem.
//!
//! For a weight vector `alpha` the inner infimum over alternatives with one
//! change point at `x' != x*` has a closed form per shift direction:
//!
//! ```text
//! x' > x*:  Delta^2 A B' / (2 sigma^2 (A + B')),  A = sum_{i <= x*} a_i,  B' = sum_{x* < i <= x'} a_i
//! x' < x*:  Delta^2 A' B / (2 sigma^2 (A' + B)),  A' = sum_{x' < i <= x*} a_i,  B = sum_{i > x*} a_i
//! ```
//!
//! Every shift is evaluated, not only the adjacent ones, and the supremum is
//! taken by grid search over the simplex. The result never consults the
//! closed-form constant.

use crate::env::EnvironmentSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimplexSearch {
    /// Weights on arms `x*-1 .. x*+2` plus one pooled block spread evenly
    /// over the remaining arms; coarse grid, then local refinement down to
    /// the requested resolution.
    #[default]
    Reduced,
    /// Every lattice point of the full `K`-simplex at the requested
    /// resolution. Only practical for small `K`.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericCStar {
    /// Reciprocal of the best sup-inf value found.
    pub value: f64,
    pub sup_inf: f64,
    /// Per-arm maximizing weights.
    pub weights: Vec<f64>,
}

const MAX_FULL_POINTS: u128 = 50_000_000;

pub fn numeric_c_star_single(env: &EnvironmentSpec, sigma: f64, resolution: f64) -> Result<NumericCStar> {
    numeric_c_star_single_with(env, sigma, resolution, SimplexSearch::Reduced)
}

pub fn numeric_c_star_single_with(
    env: &EnvironmentSpec,
    sigma: f64,
    resolution: f64,
    search: SimplexSearch,
) -> Result<NumericCStar> {
    let gaps = env.gaps();
    let [gap] = gaps.as_slice() else {
        return Err(Error::ChangePointCount {
            expected: "exactly 1".into(),
            found: gaps.len(),
        });
    };
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    if !(resolution > 0.0 && resolution <= 0.5) {
        return Err(Error::Domain(format!(
            "grid resolution must lie in (0, 0.5], got {resolution}"
        )));
    }
    let k = env.num_arms();
    if k < 3 {
        return Err(Error::Domain("no single-change alternative exists for K = 2".into()));
    }
    let problem = Problem {
        k,
        change: gap.index,
        scale: gap.size * gap.size / (2.0 * sigma * sigma),
    };
    let (sup_inf, weights) = match search {
        SimplexSearch::Reduced => problem.reduced_search(resolution),
        SimplexSearch::Full => problem.full_search(resolution)?,
    };
    Ok(NumericCStar {
        value: 1.0 / sup_inf,
        sup_inf,
        weights,
    })
}

struct Problem {
    k: usize,
    change: usize,
    scale: f64,
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a + b <= 0.0 {
        0.0
    } else {
        a * b / (a + b)
    }
}

impl Problem {
    /// Infimum over all single-change alternatives for per-arm weights `w`.
    fn inner_inf(&self, w: &[f64]) -> f64 {
        let x = self.change;
        let mut prefix = Vec::with_capacity(self.k + 1);
        prefix.push(0.0);
        for &wi in w {
            prefix.push(prefix.last().unwrap() + wi);
        }
        let total = prefix[self.k];
        let left = prefix[x];
        let right = total - left;
        let mut best = f64::INFINITY;
        for alt in 1..self.k {
            let v = if alt > x {
                harmonic(left, prefix[alt] - prefix[x])
            } else if alt < x {
                harmonic(prefix[x] - prefix[alt], right)
            } else {
                continue;
            };
            best = best.min(v);
        }
        self.scale * best
    }

    /// Arms given their own coordinate in the reduced search.
    fn support(&self) -> (Vec<usize>, Vec<usize>) {
        let lo = self.change.saturating_sub(1).max(1);
        let hi = (self.change + 2).min(self.k);
        let own: Vec<usize> = (lo..=hi).collect();
        let rest = (1..=self.k).filter(|a| !own.contains(a)).collect();
        (own, rest)
    }

    fn expand(&self, coords: &[f64], own: &[usize], rest: &[usize]) -> Vec<f64> {
        let mut w = vec![0.0; self.k];
        for (c, &arm) in coords.iter().zip(own) {
            w[arm - 1] = *c;
        }
        if !rest.is_empty() {
            let pooled = coords[own.len()] / rest.len() as f64;
            for &arm in rest {
                w[arm - 1] = pooled;
            }
        }
        w
    }

    fn reduced_search(&self, resolution: f64) -> (f64, Vec<f64>) {
        let (own, rest) = self.support();
        let dim = own.len() + usize::from(!rest.is_empty());
        let eval = |c: &[f64]| self.inner_inf(&self.expand(c, &own, &rest));

        let coarse = 20usize.min((1.0 / resolution).round() as usize).max(2);
        let mut step = 1.0 / coarse as f64;
        let mut best = (f64::NEG_INFINITY, vec![0.0; dim]);
        for_each_composition(coarse, dim, &mut |parts| {
            let c: Vec<f64> = parts.iter().map(|&p| p as f64 * step).collect();
            let v = eval(&c);
            if v > best.0 {
                best = (v, c);
            }
        });

        // Objective is concave in the weights, so zooming around the incumbent
        // cannot strand the search in a local optimum.
        const SPAN: i64 = 4;
        while step > resolution * (1.0 + 1e-9) {
            step = (step / SPAN as f64).max(resolution);
            let center = best.1.clone();
            let mut offsets = vec![0i64; dim - 1];
            loop {
                let mut c = center.clone();
                let mut ok = true;
                for (ci, &o) in c.iter_mut().zip(&offsets) {
                    *ci += o as f64 * step;
                    ok &= *ci >= -1e-12;
                }
                let used: f64 = c[..dim - 1].iter().sum();
                c[dim - 1] = 1.0 - used;
                ok &= c[dim - 1] >= -1e-12;
                if ok {
                    for ci in c.iter_mut() {
                        *ci = ci.max(0.0);
                    }
                    let v = eval(&c);
                    if v > best.0 {
                        best = (v, c);
                    }
                }
                if !next_offset(&mut offsets, SPAN) {
                    break;
                }
            }
        }
        let weights = self.expand(&best.1, &own, &rest);
        (best.0, weights)
    }

    fn full_search(&self, resolution: f64) -> Result<(f64, Vec<f64>)> {
        let steps = (1.0 / resolution).round() as usize;
        let points = binomial(steps + self.k - 1, self.k - 1);
        if points > MAX_FULL_POINTS {
            return Err(Error::Domain(format!(
                "full simplex grid has {points} points; coarsen the resolution or use the reduced search"
            )));
        }
        let h = 1.0 / steps as f64;
        let mut best = (f64::NEG_INFINITY, vec![0.0; self.k]);
        for_each_composition(steps, self.k, &mut |parts| {
            let w: Vec<f64> = parts.iter().map(|&p| p as f64 * h).collect();
            let v = self.inner_inf(&w);
            if v > best.0 {
                best = (v, w);
            }
        });
        Ok(best)
    }
}

fn next_offset(offsets: &mut [i64], span: i64) -> bool {
    for o in offsets.iter_mut() {
        if *o < span {
            *o += 1;
            return true;
        }
        *o = -span;
    }
    false
}

fn binomial(n: usize, r: usize) -> u128 {
    let r = r.min(n - r);
    (0..r).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Calls `f` on every way to write `total` as an ordered sum of `parts`
/// non-negative integers.
fn for_each_composition(total: usize, parts: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(remaining: usize, slot: usize, buf: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if slot + 1 == buf.len() {
            buf[slot] = remaining;
            f(buf);
            return;
        }
        for v in 0..=remaining {
            buf[slot] = v;
            rec(remaining - v, slot + 1, buf, f);
        }
    }
    let mut buf = vec![0; parts];
    rec(total, 0, &mut buf, f);
}
