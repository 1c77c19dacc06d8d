//! Experiment configuration file.
//!
//! ```json
//! {
//!   "environment": {"preset": "logistic", "d": 3},
//!   "delta0": 0.3,
//!   "eps": 0.01,
//!   "horizons": [1024, 2048, 4096],
//!   "n_trials": 20,
//!   "seed": 7,
//!   "mode": "computational"
//! }
//! ```
//!
//! `environment` is either a preset or an explicit
//! `{"model": {...}, "contexts": {...}, "utility": {...}}` object. Every other
//! field is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bandit::{ParamMode, TheoryConstants};
use crate::demand::validate_bounds;
use crate::env::{Environment, EnvironmentSpec};
use crate::error::{Error, Result};
use crate::harness::{trial_seed, RhoMethod};
use crate::io::read_json;
use crate::solver::cost::RHO_PRICE_POINTS;
use crate::utility::DistributionKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Linear,
    Logistic,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvironmentConfig {
    Preset {
        preset: Preset,
        #[serde(default = "one")]
        d: usize,
    },
    Explicit(Box<EnvironmentSpec>),
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        EnvironmentConfig::Preset {
            preset: Preset::Linear,
            d: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    #[default]
    Computational,
    Theoretical,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub environment: EnvironmentConfig,
    pub delta0: Option<f64>,
    pub delta0_list: Option<Vec<f64>>,
    pub eps: Option<f64>,
    /// Minimum number of price points for dynamic programs.
    pub price_points: Option<usize>,
    pub horizon: Option<usize>,
    pub horizons: Option<Vec<usize>>,
    pub n_trials: Option<usize>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub mode: ModeName,
    #[serde(default)]
    pub rho_method: RhoMethod,
}

pub const DEFAULT_DELTA0: f64 = 0.3;
pub const DEFAULT_EPS: f64 = 0.01;
pub const DEFAULT_HORIZON: usize = 1000;
pub const DEFAULT_TRIALS: usize = 20;

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn delta0(&self) -> f64 {
        self.delta0.unwrap_or(DEFAULT_DELTA0)
    }

    pub fn eps(&self) -> f64 {
        self.eps.unwrap_or(DEFAULT_EPS)
    }

    pub fn rho_price_points(&self) -> usize {
        self.price_points.unwrap_or(RHO_PRICE_POINTS)
    }

    pub fn delta0_list(&self) -> Vec<f64> {
        self.delta0_list
            .clone()
            .unwrap_or_else(|| (1..=15).map(|i| i as f64 / 10.0).collect())
    }

    pub fn horizons(&self) -> Vec<usize> {
        self.horizons
            .clone()
            .unwrap_or_else(|| (10..=14).map(|k| 1usize << k).collect())
    }

    /// Explicit seeds, or `seed ^ i` for each of `n_trials` trials.
    pub fn trial_seeds(&self) -> Result<Vec<u64>> {
        if let Some(s) = &self.seeds {
            if let Some(n) = self.n_trials {
                if n != s.len() {
                    return Err(Error::invalid(format!(
                        "{} seeds listed but n_trials is {n}",
                        s.len()
                    )));
                }
            }
            if s.is_empty() {
                return Err(Error::invalid("seed list is empty"));
            }
            return Ok(s.clone());
        }
        let n = self.n_trials.unwrap_or(DEFAULT_TRIALS);
        if n == 0 {
            return Err(Error::invalid("n_trials must be at least 1"));
        }
        Ok((0..n).map(|i| trial_seed(self.seed(), i)).collect())
    }

    pub fn environment(&self) -> Result<Environment> {
        match &self.environment {
            EnvironmentConfig::Preset { preset, d } => {
                if *d == 0 {
                    return Err(Error::invalid("environment dimension must be positive"));
                }
                match preset {
                    Preset::Linear => Environment::linear_preset(*d, self.seed()),
                    Preset::Logistic => Environment::logistic_preset(*d, self.seed()),
                }
            }
            EnvironmentConfig::Explicit(spec) => spec.build(self.seed()),
        }
    }

    pub fn param_mode(&self, env: &Environment) -> Result<ParamMode> {
        Ok(match self.mode {
            ModeName::Computational => ParamMode::Computational,
            ModeName::Theoretical => ParamMode::Theoretical(theory_constants(env)?),
        })
    }
}

/// Support width of one context coordinate.
fn coordinate_width(dist: &crate::utility::UtilityDistribution) -> f64 {
    match dist.kind() {
        DistributionKind::PointMass => 0.0,
        DistributionKind::Uniform => (2.0 * 3f64.sqrt() * dist.scale()).min(2.0 * dist.clip()),
        DistributionKind::Empirical => {
            let s = dist.samples().unwrap_or(&[]);
            s.last().zip(s.first()).map_or(0.0, |(hi, lo)| hi - lo)
        }
        _ => 2.0 * dist.clip(),
    }
}

/// Curvature, covariance and diameter constants of an environment.
pub fn theory_constants(env: &Environment) -> Result<TheoryConstants> {
    let b = env.utility_bound();
    let bounds = validate_bounds(&env.model, (-b, b))?.bounds;
    let diam_x = env
        .context_gen
        .coordinates
        .iter()
        .map(|c| coordinate_width(c).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(TheoryConstants {
        m_r: bounds.m_r,
        sigma_r: bounds.sigma_r,
        sigma_x: env.context_gen.declared_sigma_x(),
        diam_x,
    })
}
