//! Piecewise constant ground-truth environments.
//!
//! Arms and change points are numbered from 1 in every public signature:
//! change point `j` sits between arms `j` and `j + 1`.

use std::fs;
use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::standard_normal;

/// Ground-truth mean vector and Gaussian noise scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    #[serde(default)]
    pub name: String,
    pub means: Vec<f64>,
    pub sigma: f64,
}

/// One change point together with the absolute jump in mean across it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gap {
    pub index: usize,
    pub size: f64,
}

/// Non-fatal outcome of [`EnvironmentSpec::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Validation {
    Ok,
    Warning(Vec<String>),
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        matches!(self, Validation::Ok)
    }
}

const BUNDLED: [(&str, &str); 4] = [
    ("v1", include_str!("../envs/v1.json")),
    ("v2", include_str!("../envs/v2.json")),
    ("v3", include_str!("../envs/v3.json")),
    ("v4", include_str!("../envs/v4.json")),
];

impl EnvironmentSpec {
    pub fn new(means: Vec<f64>, sigma: f64) -> Self {
        EnvironmentSpec {
            name: String::new(),
            means,
            sigma,
        }
    }

    pub fn named(name: impl Into<String>, means: Vec<f64>, sigma: f64) -> Self {
        EnvironmentSpec {
            name: name.into(),
            means,
            sigma,
        }
    }

    /// Bundled experiment environment by name (`"v1"` .. `"v4"`).
    pub fn bundled(name: &str) -> Option<Self> {
        let name = name.strip_suffix(".json").unwrap_or(name);
        BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, body)| serde_json::from_str(body).expect("bundled environment parses"))
    }

    pub fn bundled_names() -> impl Iterator<Item = &'static str> {
        BUNDLED.iter().map(|(n, _)| *n)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("environment serializes")
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    /// Mean of `arm` (1-based).
    pub fn mean(&self, arm: usize) -> Result<f64> {
        self.check_arm(arm)?;
        Ok(self.means[arm - 1])
    }

    /// Indices `j` with `means[j] != means[j + 1]`, compared exactly.
    pub fn change_points(&self) -> Vec<usize> {
        self.means
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] != w[1])
            .map(|(i, _)| i + 1)
            .collect()
    }

    pub fn num_change_points(&self) -> usize {
        self.change_points().len()
    }

    pub fn gaps(&self) -> Vec<Gap> {
        self.change_points()
            .into_iter()
            .map(|j| Gap {
                index: j,
                size: (self.means[j - 1] - self.means[j]).abs(),
            })
            .collect()
    }

    /// Gap sizes sorted descending. Ties keep change-point order.
    pub fn sorted_gaps(&self) -> Vec<f64> {
        let mut g: Vec<f64> = self.gaps().iter().map(|g| g.size).collect();
        g.sort_by(|a, b| b.total_cmp(a));
        g
    }

    /// `i`-th largest gap (1-based), with `0` past the last change point.
    pub fn ordered_gap(&self, i: usize) -> f64 {
        assert!(i >= 1, "ordered gaps are 1-based");
        self.sorted_gaps().get(i - 1).copied().unwrap_or(0.0)
    }

    /// Gaps of the `n` largest changes, in change-point order. Among equal
    /// sizes, lower indices win.
    pub fn top_gaps(&self, n: usize) -> Vec<Gap> {
        let mut gaps = self.gaps();
        gaps.sort_by(|a, b| b.size.total_cmp(&a.size).then(a.index.cmp(&b.index)));
        gaps.truncate(n);
        gaps.sort_by_key(|g| g.index);
        gaps
    }

    /// Hard errors for unusable environments; warnings for adjacent change
    /// points, which break the separation assumption but still run.
    pub fn validate(&self) -> Result<Validation> {
        if self.means.len() < 2 {
            return Err(Error::InvalidEnvironment(format!(
                "need at least 2 arms, got {}",
                self.means.len()
            )));
        }
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::InvalidEnvironment(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        if let Some(i) = self.means.iter().position(|m| !m.is_finite()) {
            return Err(Error::InvalidEnvironment(format!(
                "mean of arm {} is not finite",
                i + 1
            )));
        }
        let warnings: Vec<String> = self
            .change_points()
            .windows(2)
            .filter(|w| w[0] + 1 == w[1])
            .map(|w| format!("change points {} and {} are adjacent", w[0], w[1]))
            .collect();
        if warnings.is_empty() {
            Ok(Validation::Ok)
        } else {
            Ok(Validation::Warning(warnings))
        }
    }

    /// Noisy reward `means[arm] + sigma * z` for a 1-based arm.
    pub fn sample_reward<R: RngCore + ?Sized>(&self, arm: usize, rng: &mut R) -> Result<f64> {
        self.check_arm(arm)?;
        Ok(self.means[arm - 1] + self.sigma * standard_normal(rng))
    }

    fn check_arm(&self, arm: usize) -> Result<()> {
        if arm == 0 || arm > self.means.len() {
            return Err(Error::ArmOutOfRange {
                arm,
                k: self.means.len(),
            });
        }
        Ok(())
    }
}
