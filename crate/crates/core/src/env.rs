//! Simulation environments: a true demand model, a context generator, and the
//! full-information fair benchmark used to measure regret.

use serde::{Deserialize, Serialize};

use crate::demand::{validate_bounds, DemandModel, LinkFunction};
use crate::error::{Error, Result};
use crate::solver::cost::RHO_PRICE_POINTS;
use crate::solver::dp::{solve_dp_with, DpConfig};
use crate::solver::policy::{evaluate_policy_revenue, PiecewiseLinearPolicy};
use crate::solver::{build_policy, linear_optimal_policy};
use crate::utility::{discretize, ContextGenerator, ContextSpec, UtilityDistribution};

/// Samples drawn to build the implied utility distribution of a generator.
pub const IMPLIED_SAMPLES: usize = 200_000;
/// Utility grid step for the benchmark policy.
pub const BENCHMARK_EPS: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub model: DemandModel,
    pub context_gen: ContextGenerator,
    pub utility_dist: UtilityDistribution,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkMethod {
    Linear,
    Dp,
}

/// Optimal fair policy under full information, evaluated at realized
/// baseline utilities.
#[derive(Debug, Clone, PartialEq)]
pub struct FairBenchmark {
    pub policy: PiecewiseLinearPolicy,
    pub method: BenchmarkMethod,
    pub delta0: f64,
    /// Expected revenue of the policy on the benchmark utility grid.
    pub grid_revenue: f64,
}

impl FairBenchmark {
    pub fn price(&self, u: f64) -> f64 {
        self.policy.evaluate(u)
    }
}

impl Environment {
    /// Builds an environment; without an explicit utility distribution the one
    /// implied by the context generator is sampled from `rng_seed`.
    pub fn new(
        model: DemandModel,
        context_gen: ContextGenerator,
        utility_dist: Option<UtilityDistribution>,
        rng_seed: u64,
    ) -> Result<Self> {
        model.validate()?;
        if model.dim() != context_gen.dim() {
            return Err(Error::invalid(format!(
                "model has {} utility weights but contexts have {} coordinates",
                model.dim(),
                context_gen.dim()
            )));
        }
        if model.theta0 != context_gen.theta0 {
            return Err(Error::invalid(
                "model theta0 and context generator theta0 differ",
            ));
        }
        let utility_dist = match utility_dist {
            Some(u) => u,
            None => context_gen.implied_utility(
                IMPLIED_SAMPLES,
                rng_seed,
                context_gen.utility_bound(),
            )?,
        };
        Ok(Environment {
            model,
            context_gen,
            utility_dist,
            rng_seed,
        })
    }

    /// Linear demand with `d` coordinates iid uniform on `[0.5, 0.9]`,
    /// `theta0 = 1/d`, `alpha0 = 1`, prices in `[0, 1]`. Expected demand stays
    /// inside `[0, 1]` on the whole domain.
    pub fn linear_preset(d: usize, seed: u64) -> Result<Self> {
        let theta0 = vec![1.0 / d as f64; d];
        let coord = UtilityDistribution::uniform(0.5, 0.9, 0.9)?;
        let model = DemandModel::new(LinkFunction::Linear, theta0.clone(), 1.0, 0.0, 1.0)?;
        Self::new(model, ContextGenerator::iid(theta0, coord)?, None, seed)
    }

    /// Logistic demand with `d` coordinates iid uniform on `[0, 1]`,
    /// `theta0 = 1/sqrt(d)`, `alpha0 = 1`, prices in `[1, 5]`.
    pub fn logistic_preset(d: usize, seed: u64) -> Result<Self> {
        let theta0 = vec![1.0 / (d as f64).sqrt(); d];
        let coord = UtilityDistribution::uniform(0.0, 1.0, 1.0)?;
        let model = DemandModel::new(LinkFunction::Logistic, theta0.clone(), 1.0, 1.0, 5.0)?;
        Self::new(model, ContextGenerator::iid(theta0, coord)?, None, seed)
    }

    /// Bound on the baseline utility used for grids and diagnostics.
    pub fn utility_bound(&self) -> f64 {
        self.context_gen
            .utility_bound()
            .max(self.utility_dist.clip())
    }

    /// Full-information optimal fair policy: the linear form when the
    /// structure result applies, otherwise the dynamic program.
    pub fn benchmark(&self, delta0: f64) -> Result<FairBenchmark> {
        let b = self.utility_bound();
        let grid = discretize(&self.utility_dist, b, BENCHMARK_EPS)?;
        let bounds = validate_bounds(&self.model, (-b, b))?.bounds;
        let (policy, method) = if delta0 <= bounds.linear_structure_limit() {
            let lin = linear_optimal_policy(
                &self.model,
                &grid,
                self.utility_dist.moments(),
                delta0,
                &bounds,
            )?;
            (lin.policy, BenchmarkMethod::Linear)
        } else {
            let config = DpConfig::with_price_points(RHO_PRICE_POINTS);
            let sol = solve_dp_with(&self.model, &grid, delta0, BENCHMARK_EPS, &config)?;
            (build_policy(&sol, &grid, delta0)?, BenchmarkMethod::Dp)
        };
        let grid_revenue = evaluate_policy_revenue(&policy, &self.model, &grid)?;
        Ok(FairBenchmark {
            policy,
            method,
            delta0,
            grid_revenue,
        })
    }
}

/// JSON form of an environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub model: DemandModel,
    pub contexts: ContextSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilityDistribution>,
}

impl EnvironmentSpec {
    pub fn build(&self, seed: u64) -> Result<Environment> {
        Environment::new(
            self.model.clone(),
            self.contexts.build()?,
            self.utility.clone(),
            seed,
        )
    }
}
