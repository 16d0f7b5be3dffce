//! JSON configurations, one per subcommand. Unknown fields are rejected.

use serde::{Deserialize, Serialize};

use crate::distributions::{Family, FamilySpec};
use crate::error::{Error, Result};
use crate::sde::GridKind;

fn default_bootstrap() -> usize {
    200
}
fn default_grid_points() -> usize {
    201
}
fn default_min_tail_hits() -> u64 {
    30
}
fn default_p() -> f64 {
    2.0
}

/// Per-coordinate scales `sqrt(Sigma_jj)`; errors unless the coordinates are
/// independent (product family or diagonal Gaussian).
pub fn independent_scales(family: &Family) -> Result<Vec<f64>> {
    let cov = family.covariance();
    let d = family.dim();
    for r in 0..d {
        for c in 0..d {
            if r != c && cov[(r, c)] != 0.0 {
                return Err(Error::InvalidParameter("experiment needs independent coordinates (diagonal covariance)".into()));
            }
        }
    }
    let s: Vec<f64> = (0..d).map(|j| cov[(j, j)].sqrt()).collect();
    if s.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter("every coordinate needs positive variance".into()));
    }
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSweepConfig {
    pub family: FamilySpec,
    pub n_values: Vec<usize>,
    pub reps: usize,
    /// Bootstrap resamples for the slope interval (0 disables it).
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

impl RateSweepConfig {
    pub fn validate(&self) -> Result<Family> {
        if self.n_values.len() < 4 {
            return Err(Error::InvalidParameter(format!("rate sweep needs at least 4 n-values, got {}", self.n_values.len())));
        }
        if self.n_values.contains(&0) {
            return Err(Error::InvalidParameter("n-values must be positive".into()));
        }
        if self.reps < 2 {
            return Err(Error::InvalidParameter("reps must be at least 2".into()));
        }
        if self.grid_points == 0 {
            return Err(Error::InvalidParameter("grid_points must be positive".into()));
        }
        let family = self.family.build()?;
        independent_scales(&family)?;
        Ok(family)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdRatioConfig {
    pub family: FamilySpec,
    pub n_values: Vec<usize>,
    pub x_values: Vec<f64>,
    pub reps: usize,
    #[serde(default = "default_min_tail_hits")]
    pub min_tail_hits: u64,
}

/// Upper end of the admissible window `s (s^2 n / (S^2 poincare))^{1/6}` with
/// `s`, `S` the smallest and largest coordinate scale.
pub fn md_window(scales: &[f64], n: usize, poincare: f64) -> f64 {
    let lo = scales.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scales.iter().copied().fold(0.0, f64::max);
    lo * (lo * lo * n as f64 / (hi * hi * poincare)).powf(1.0 / 6.0)
}

impl MdRatioConfig {
    pub fn validate(&self) -> Result<Family> {
        if self.n_values.is_empty() || self.x_values.is_empty() {
            return Err(Error::InvalidParameter("n_values and x_values must be non-empty".into()));
        }
        if self.n_values.contains(&0) {
            return Err(Error::InvalidParameter("n-values must be positive".into()));
        }
        if self.reps < 2 {
            return Err(Error::InvalidParameter("reps must be at least 2".into()));
        }
        let family = self.family.build()?;
        let scales = independent_scales(&family)?;
        for &n in &self.n_values {
            let upper = md_window(&scales, n, family.poincare_bound);
            for &x in &self.x_values {
                if !(x >= 0.0 && x <= upper) {
                    return Err(Error::OutsideWindow { x, upper, n });
                }
            }
        }
        Ok(family)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub family: FamilySpec,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollmerRunConfig {
    pub family: FamilySpec,
    pub n_paths: usize,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub grid: Option<GridKind>,
    #[serde(default)]
    pub snapshot: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    /// Föllmer coupling of the standardized `n`-sum (atom target).
    Follmer,
    MartingaleEmbedding,
    Composite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleConfig {
    pub family: FamilySpec,
    pub construction: Construction,
    /// Number of summands.
    pub n: usize,
    pub n_pairs: usize,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub pilot: Option<usize>,
    /// Atoms per coordinate for empirical targets.
    #[serde(default)]
    pub atoms: Option<usize>,
    /// Projection direction (default `e_1`).
    #[serde(default)]
    pub u: Option<Vec<f64>>,
    #[serde(default = "default_p")]
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SteinTarget {
    Gaussian { variance: f64 },
    SmoothedExponential { a: f64 },
    TiltedSmoothedExponential { a: f64, eps: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteinCheckConfig {
    pub target: SteinTarget,
    pub points: Vec<f64>,
    pub horizon: f64,
    pub n_paths: usize,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceConfig {
    pub family: FamilySpec,
    pub n: usize,
    pub reps: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

fn default_mgm_pairs() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IneqSuiteConfig {
    #[serde(default = "default_mgm_pairs")]
    pub mgm_pairs: usize,
}

impl Default for IneqSuiteConfig {
    fn default() -> Self {
        Self { mgm_pairs: default_mgm_pairs() }
    }
}
