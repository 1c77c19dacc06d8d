//! Two-phase fair pricing with demand learning: random two-price
//! experimentation, a maximum-likelihood fit, then UCB over starting prices of
//! a linear-in-utility policy whose slope is shrunk to absorb estimation error.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::demand::dot;
use crate::env::{Environment, FairBenchmark};
use crate::error::{Error, Result};
use crate::estimation::{
    default_init, mle_fit, LikelihoodSpec, ModelEstimate, Observation, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};
use crate::numeric::linspace;

/// Constants entering the conservative parameter choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub m_r: f64,
    pub sigma_r: f64,
    pub sigma_x: f64,
    /// Diameter of the context support.
    pub diam_x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum ParamMode {
    /// `kappa1 = sqrt(ln(dT))`, `kappa2 = sqrt(ln T)`.
    Computational,
    /// `kappa1 = 8 M_r diam sqrt(ln(dT)) / (min(sigma_x, (p_max - p_min)^2 / 4) sigma_r)`,
    /// `kappa2 = 4 sqrt(ln T)`.
    Theoretical(TheoryConstants),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditParams {
    pub horizon: usize,
    pub t0: usize,
    pub kappa1: f64,
    pub kappa2: f64,
    pub k_arms: usize,
    pub delta0: f64,
    pub delta0_tilde: f64,
    pub mode: ParamMode,
}

/// Smallest integer `n` with `n^3 >= v`.
fn ceil_cbrt(v: u128) -> usize {
    let mut n = (v as f64).cbrt().ceil() as u128;
    while n > 0 && (n - 1).pow(3) >= v {
        n -= 1;
    }
    while n.pow(3) < v {
        n += 1;
    }
    n as usize
}

/// Experimentation length `ceil(T^(2/3))`, arm count `ceil(T^(1/3))`, and the
/// fairness cushion `max(0, delta0 - kappa1 / sqrt(T0))`.
pub fn make_params(
    horizon: usize,
    d: usize,
    delta0: f64,
    mode: ParamMode,
    price_interval: (f64, f64),
) -> Result<BanditParams> {
    if horizon < 8 {
        return Err(Error::invalid(format!(
            "horizon must be at least 8, got {horizon}"
        )));
    }
    if !(delta0 > 0.0 && delta0.is_finite()) {
        return Err(Error::invalid(format!(
            "delta0 must be positive, got {delta0}"
        )));
    }
    if d == 0 {
        return Err(Error::invalid("context dimension must be positive"));
    }
    let t = horizon as u128;
    let t0 = ceil_cbrt(t * t);
    let k_arms = ceil_cbrt(t);
    let tf = horizon as f64;
    let log_dt = (d as f64 * tf).ln().sqrt();
    let (kappa1, kappa2) = match mode {
        ParamMode::Computational => (log_dt, tf.ln().sqrt()),
        ParamMode::Theoretical(c) => {
            let width = price_interval.1 - price_interval.0;
            let denom = c.sigma_x.min(0.25 * width * width) * c.sigma_r;
            if !(denom > 0.0) {
                return Err(Error::invalid(
                    "theoretical parameters need positive sigma_x and sigma_r",
                ));
            }
            (
                8.0 * c.m_r * c.diam_x * log_dt / denom,
                4.0 * tf.ln().sqrt(),
            )
        }
    };
    let delta0_tilde = (delta0 - kappa1 / (t0 as f64).sqrt()).max(0.0);
    Ok(BanditParams {
        horizon,
        t0,
        kappa1,
        kappa2,
        k_arms,
        delta0,
        delta0_tilde,
        mode,
    })
}

fn draw_demand<R: Rng + ?Sized>(env: &Environment, u: f64, p: f64, rng: &mut R) -> Result<f64> {
    let q = env.model.expected_demand(u, p)?.clamp(0.0, 1.0);
    Ok(if rng.random_bool(q) { 1.0 } else { 0.0 })
}

/// `T0` periods at the lower or upper price with equal probability.
pub fn run_experimentation<R: Rng + ?Sized>(
    env: &Environment,
    params: &BanditParams,
    rng: &mut R,
) -> Result<Vec<Observation>> {
    (0..params.t0)
        .map(|_| {
            let x = env.context_gen.sample_context(rng);
            let p = if rng.random_bool(0.5) {
                env.model.price_max
            } else {
                env.model.price_min
            };
            let y = draw_demand(env, env.model.baseline_utility(&x), p, rng)?;
            Ok(Observation { x, p, y })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UcbState {
    /// Starting prices.
    pub arms: Vec<f64>,
    /// Cumulative revenue per arm.
    pub r: Vec<f64>,
    /// Pull counts.
    pub n: Vec<u64>,
    pub theta_hat: Vec<f64>,
    pub delta0_tilde: f64,
}

/// Arms evenly spaced on `[p_min - d~ max u^, p_max - d~ min u^]`, where `u^`
/// ranges over estimated utilities of the experimentation contexts. An empty
/// interval falls back to the price interval and returns a diagnostic.
pub fn init_ucb(
    estimate: &ModelEstimate,
    data: &[Observation],
    params: &BanditParams,
    price_interval: (f64, f64),
) -> (UcbState, Option<String>) {
    let (lo_p, hi_p) = price_interval;
    let dt = params.delta0_tilde;
    let (umin, umax) = data
        .iter()
        .map(|o| dot(&o.x, &estimate.theta_hat))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), u| {
            (a.min(u), b.max(u))
        });
    let (mut lo, mut hi) = if data.is_empty() {
        (lo_p, hi_p)
    } else {
        (lo_p - dt * umax, hi_p - dt * umin)
    };
    let mut diagnostic = None;
    if !(lo <= hi) {
        diagnostic = Some(format!(
            "empty starting-price interval [{lo}, {hi}]; using the price interval"
        ));
        lo = lo_p;
        hi = hi_p;
    }
    let k = params.k_arms.max(1);
    (
        UcbState {
            arms: linspace(lo, hi, k),
            r: vec![0.0; k],
            n: vec![0; k],
            theta_hat: estimate.theta_hat.clone(),
            delta0_tilde: dt,
        },
        diagnostic,
    )
}

/// The first never-pulled arm if any, otherwise the largest upper confidence
/// bound `r/n + kappa2/sqrt(n)` (smallest index on ties).
pub fn select_arm(state: &UcbState, kappa2: f64) -> usize {
    if let Some(k) = state.n.iter().position(|&n| n == 0) {
        return k;
    }
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (k, (&r, &n)) in state.r.iter().zip(&state.n).enumerate() {
        let n = n as f64;
        let v = r / n + kappa2 / n.sqrt();
        if v > best_val {
            best = k;
            best_val = v;
        }
    }
    best
}

/// `trim(arm price + d~ x^T theta^)` to the price interval.
pub fn implement_price(state: &UcbState, arm: usize, x: &[f64], price_interval: (f64, f64)) -> f64 {
    let raw = state.arms[arm] + state.delta0_tilde * dot(x, &state.theta_hat);
    raw.clamp(price_interval.0, price_interval.1)
}

pub fn update_state(state: &mut UcbState, arm: usize, p: f64, y: f64) {
    state.r[arm] += y * p;
    state.n[arm] += 1;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodRecord {
    pub t: usize,
    pub x: Vec<f64>,
    pub arm: Option<usize>,
    pub price: f64,
    pub y: f64,
    pub instant_regret: f64,
    pub cum_regret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub records: Vec<PeriodRecord>,
    pub cumulative_regret: f64,
    /// Cumulative expected revenue of the benchmark at the realized contexts.
    pub cumulative_optimal_revenue: f64,
    /// Phase-two periods whose implemented policy is steeper than `delta0`
    /// in true utility.
    pub fairness_violations: usize,
    pub params: BanditParams,
    pub estimate: ModelEstimate,
    pub theta_err: f64,
    pub ucb: UcbState,
    pub diagnostics: Vec<String>,
}

impl RegretTrace {
    pub fn relative_regret(&self) -> f64 {
        self.cumulative_regret / self.cumulative_optimal_revenue
    }

    pub fn summary(&self, seed: u64) -> RunSummary {
        RunSummary {
            seed,
            horizon: self.params.horizon,
            t0: self.params.t0,
            k: self.params.k_arms,
            kappa1: self.params.kappa1,
            kappa2: self.params.kappa2,
            delta0_tilde: self.params.delta0_tilde,
            theta_err: self.theta_err,
            cum_regret: self.cumulative_regret,
            fairness_violations: self.fairness_violations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "T0")]
    pub t0: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub kappa1: f64,
    pub kappa2: f64,
    pub delta0_tilde: f64,
    pub theta_err: f64,
    pub cum_regret: f64,
    pub fairness_violations: usize,
}

/// Slope in true utility of `u -> d~ x^T theta^`, measured along the true
/// utility direction: `d~ <theta^, theta0> / |theta0|^2`.
pub fn utility_slope(delta0_tilde: f64, theta_hat: &[f64], theta0: &[f64]) -> f64 {
    let norm_sq = dot(theta0, theta0);
    if norm_sq == 0.0 {
        return 0.0;
    }
    delta0_tilde * dot(theta_hat, theta0) / norm_sq
}

/// Runs both phases for `params.horizon` periods. Regret in each period is
/// the expected-revenue gap to `benchmark` at the realized context.
pub fn run_bandit<R: Rng + ?Sized>(
    env: &Environment,
    benchmark: &FairBenchmark,
    params: &BanditParams,
    rng: &mut R,
) -> Result<RegretTrace> {
    let model = &env.model;
    let interval = (model.price_min, model.price_max);
    let mut records = Vec::with_capacity(params.horizon);
    let mut cum = 0.0;
    let mut cum_opt = 0.0;
    let mut push = |t: usize, x: Vec<f64>, arm: Option<usize>, price: f64, y: f64| -> Result<()> {
        let u = model.baseline_utility(&x);
        let best = model.expected_revenue(u, benchmark.price(u))?;
        let instant = best - model.expected_revenue(u, price)?;
        cum += instant;
        cum_opt += best;
        records.push(PeriodRecord {
            t,
            x,
            arm,
            price,
            y,
            instant_regret: instant,
            cum_regret: cum,
        });
        Ok(())
    };

    let data = run_experimentation(env, params, rng)?;
    for (i, o) in data.iter().enumerate() {
        push(i + 1, o.x.clone(), None, o.p, o.y)?;
    }

    let mut diagnostics = Vec::new();
    let spec = LikelihoodSpec::with_price_coeff(model.link, model.price_coeff);
    let mut estimate = mle_fit(
        &spec,
        &data,
        &default_init(model.link, model.dim()),
        DEFAULT_TOL,
        DEFAULT_MAX_ITER,
    )?;
    if let Some(d) = &estimate.diagnostic {
        diagnostics.push(format!("estimation: {d}"));
    }
    if estimate.theta_hat.iter().any(|t| !t.is_finite()) {
        diagnostics.push("estimation: non-finite estimate replaced by zero".into());
        estimate.theta_hat = vec![0.0; model.dim()];
    }
    if params.delta0_tilde == 0.0 {
        diagnostics
            .push("fairness cushion is zero; phase two prices do not depend on context".into());
    }
    let (mut state, diag) = init_ucb(&estimate, &data, params, interval);
    diagnostics.extend(diag);

    let violates = utility_slope(params.delta0_tilde, &state.theta_hat, &model.theta0).abs()
        > params.delta0 + 1e-12;
    let mut fairness_violations = 0;
    for t in params.t0 + 1..=params.horizon {
        let x = env.context_gen.sample_context(rng);
        let arm = select_arm(&state, params.kappa2);
        let p = implement_price(&state, arm, &x, interval);
        let y = draw_demand(env, model.baseline_utility(&x), p, rng)?;
        update_state(&mut state, arm, p, y);
        if violates {
            fairness_violations += 1;
        }
        push(t, x, Some(arm), p, y)?;
    }

    let theta_err = estimate
        .theta_hat
        .iter()
        .zip(&model.theta0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(RegretTrace {
        records,
        cumulative_regret: cum,
        cumulative_optimal_revenue: cum_opt,
        fairness_violations,
        params: *params,
        estimate,
        theta_err,
        ucb: state,
        diagnostics,
    })
}
