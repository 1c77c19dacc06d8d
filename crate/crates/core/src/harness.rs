//! Multi-trial experiments: cost-of-fairness curves, regret sweeps over the
//! horizon, and log-log slope fits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::{make_params, run_bandit, ParamMode};
use crate::demand::LinkFunction;
use crate::env::{Environment, FairBenchmark};
use crate::error::{Error, Result};
use crate::numeric::{mean_sd, ols_slope};
use crate::solver::cost::{cost_of_fairness_linear, cost_of_fairness_numeric_with};
use crate::solver::dp::DpConfig;
use crate::utility::discretize;

/// Environment variable capping the number of worker threads for trials.
pub const THREADS_VAR: &str = "FAIRPRICE_THREADS";

/// Seed of trial `i`: `base ^ i`.
pub fn trial_seed(base: u64, i: usize) -> u64 {
    base ^ i as u64
}

/// Runs `f` on a rayon pool sized by `FAIRPRICE_THREADS` when it is set.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let cap = std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok());
    match cap {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RhoMethod {
    /// Closed form for linear demand, dynamic program otherwise.
    #[default]
    Auto,
    ClosedForm,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoRow {
    pub delta0: f64,
    pub rho: f64,
}

/// Cost of fairness at each budget in `delta0_list`.
pub fn rho_curve(
    env: &Environment,
    delta0_list: &[f64],
    eps: f64,
    method: RhoMethod,
    config: &DpConfig,
) -> Result<Vec<RhoRow>> {
    if delta0_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("delta0 values must be strictly increasing"));
    }
    let closed = match method {
        RhoMethod::Auto => env.model.link == LinkFunction::Linear,
        RhoMethod::ClosedForm => {
            if env.model.link != LinkFunction::Linear {
                return Err(Error::invalid(
                    "the closed form applies to linear demand only",
                ));
            }
            true
        }
        RhoMethod::Numeric => false,
    };
    if closed {
        let m = env.utility_dist.moments();
        // the closed form is written for c = 1/2; other conventions rescale alpha0
        let alpha = 2.0 * env.model.price_coeff * env.model.alpha0;
        return delta0_list
            .iter()
            .map(|&d| {
                Ok(RhoRow {
                    delta0: d,
                    rho: cost_of_fairness_linear(alpha, d, m.mu, m.nu_sq)?,
                })
            })
            .collect();
    }
    let grid = discretize(&env.utility_dist, env.utility_bound(), eps)?;
    with_thread_cap(|| {
        delta0_list
            .par_iter()
            .map(|&d| {
                let c = cost_of_fairness_numeric_with(&env.model, &grid, d, eps, config)?;
                Ok(RhoRow {
                    delta0: d,
                    rho: c.rho,
                })
            })
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub horizon: usize,
    pub cum_regret: f64,
    pub cum_optimal_revenue: f64,
    pub relative_regret: f64,
    pub fairness_violations: usize,
    pub theta_err: f64,
}

/// One bandit run per seed at horizon `horizon`, in parallel.
pub fn run_trials(
    env: &Environment,
    benchmark: &FairBenchmark,
    horizon: usize,
    mode: ParamMode,
    seeds: &[u64],
) -> Result<Vec<TrialOutcome>> {
    let params = make_params(
        horizon,
        env.model.dim(),
        benchmark.delta0,
        mode,
        (env.model.price_min, env.model.price_max),
    )?;
    with_thread_cap(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let trace = run_bandit(
                    env,
                    benchmark,
                    &params,
                    &mut ChaCha8Rng::seed_from_u64(seed),
                )?;
                Ok(TrialOutcome {
                    seed,
                    horizon,
                    cum_regret: trace.cumulative_regret,
                    cum_optimal_revenue: trace.cumulative_optimal_revenue,
                    relative_regret: trace.relative_regret(),
                    fairness_violations: trace.fairness_violations,
                    theta_err: trace.theta_err,
                })
            })
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub mean_rel_regret: f64,
    pub sd_rel_regret: f64,
    pub n_trials: usize,
}

/// Mean and standard deviation of relative regret over trials, per horizon.
pub fn regret_sweep(
    env: &Environment,
    benchmark: &FairBenchmark,
    horizons: &[usize],
    seeds: &[u64],
    mode: ParamMode,
) -> Result<Vec<SweepRow>> {
    if seeds.is_empty() {
        return Err(Error::invalid("at least one trial is required"));
    }
    if horizons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("horizons must be strictly increasing"));
    }
    horizons
        .iter()
        .map(|&t| {
            let outcomes = run_trials(env, benchmark, t, mode, seeds)?;
            let rel: Vec<f64> = outcomes.iter().map(|o| o.relative_regret).collect();
            let (mean, sd) = mean_sd(&rel);
            Ok(SweepRow {
                horizon: t,
                mean_rel_regret: mean,
                sd_rel_regret: sd,
                n_trials: seeds.len(),
            })
        })
        .collect()
}

/// Least-squares slope of `log2(y)` on `log2(x)`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::invalid("a slope needs at least two points"));
    }
    if let Some((x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::invalid(format!(
            "log-log fit needs positive values, got ({x}, {y})"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    Ok(ols_slope(&xs, &ys))
}
