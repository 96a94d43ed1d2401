use crate::error::{Error, Result};

/// Mutable per-run statistics shared by every phase of a run.
///
/// `counts` and `means` are indexed by `arm - 1`; `means[i]` carries meaning
/// only once `counts[i] > 0`. The candidate set holds change-point indices in
/// increasing order and never intersects `found`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    t: u64,
    counts: Vec<u64>,
    means: Vec<f64>,
    candidates: Vec<usize>,
    estimate: Option<usize>,
    found: Vec<usize>,
}

impl RunState {
    /// Fresh state for `k` arms with every change point as a candidate.
    pub fn new(k: usize) -> Self {
        assert!(k >= 2, "need at least two arms");
        RunState {
            t: 0,
            counts: vec![0; k],
            means: vec![0.0; k],
            candidates: (1..k).collect(),
            estimate: None,
            found: Vec::new(),
        }
    }

    /// State built directly from per-arm counts and empirical means.
    pub fn from_observations(counts: Vec<u64>, means: Vec<f64>) -> Self {
        assert_eq!(counts.len(), means.len());
        let mut s = RunState::new(counts.len());
        s.t = counts.iter().sum();
        s.counts = counts;
        s.means = means;
        s
    }

    pub fn num_arms(&self) -> usize {
        self.counts.len()
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, arm: usize) -> u64 {
        self.counts[arm - 1]
    }

    /// Empirical mean of `arm`, if it has been played.
    pub fn mean(&self, arm: usize) -> Option<f64> {
        (self.counts[arm - 1] > 0).then(|| self.means[arm - 1])
    }

    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    pub fn estimate(&self) -> Option<usize> {
        self.estimate
    }

    pub fn found(&self) -> &[usize] {
        &self.found
    }

    /// Current phase, starting at 1.
    pub fn phase(&self) -> usize {
        self.found.len() + 1
    }

    /// `|mu_j - mu_{j+1}|` for change point `j`.
    pub fn empirical_gap(&self, j: usize) -> Result<f64> {
        let a = self.mean(j).ok_or(Error::UnplayedArm(j))?;
        let b = self.mean(j + 1).ok_or(Error::UnplayedArm(j + 1))?;
        Ok((a - b).abs())
    }

    /// Folds one reward into the running mean of `arm` and advances `t`.
    pub fn record(&mut self, arm: usize, reward: f64) {
        let i = arm - 1;
        self.counts[i] += 1;
        self.means[i] += (reward - self.means[i]) / self.counts[i] as f64;
        self.t += 1;
    }

    pub fn set_estimate(&mut self, j: usize) {
        debug_assert!(self.candidates.contains(&j), "estimate {j} not a candidate");
        self.estimate = Some(j);
    }

    /// Moves `j` from the candidate set to the confirmed list and clears the
    /// estimate for the next phase.
    pub fn confirm(&mut self, j: usize) {
        self.candidates.retain(|&c| c != j);
        self.found.push(j);
        self.estimate = None;
    }
}
