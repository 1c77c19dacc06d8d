use serde::Serialize;

use crate::demand::DemandModel;
use crate::error::{Error, Result};
use crate::solver::dp::{solve_dp_with, DpConfig};
use crate::utility::UtilityGrid;

/// Price points used by default for numeric cost-of-fairness evaluation.
pub const RHO_PRICE_POINTS: usize = 10_000;

/// Closed-form cost of fairness for linear demand `u - alpha0 p / 2`:
/// `alpha0 delta0 (2 - alpha0 delta0) + (1 - alpha0 delta0)^2 mu^2 / nu^2`,
/// and 1 once `delta0 >= 1 / alpha0`.
pub fn cost_of_fairness_linear(alpha0: f64, delta0: f64, mu_u: f64, nu_sq: f64) -> Result<f64> {
    if !(alpha0 > 0.0) {
        return Err(Error::invalid(format!(
            "alpha0 must be positive, got {alpha0}"
        )));
    }
    if !(delta0 >= 0.0) {
        return Err(Error::invalid(format!(
            "delta0 must be non-negative, got {delta0}"
        )));
    }
    if nu_sq == 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    if !(nu_sq > 0.0) {
        return Err(Error::invalid(format!(
            "second moment must be positive, got {nu_sq}"
        )));
    }
    let a = alpha0 * delta0;
    if a >= 1.0 {
        return Ok(1.0);
    }
    Ok(a * (2.0 - a) + (1.0 - a) * (1.0 - a) * mu_u * mu_u / nu_sq)
}

/// Optimal revenue without fairness constraints on `grid`.
pub fn unconstrained_revenue(model: &DemandModel, grid: &UtilityGrid) -> Result<f64> {
    grid.expectation(|u| model.expected_revenue(u, model.unconstrained_optimal_price(u).price))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostOfFairness {
    pub rho: f64,
    pub fair_revenue: f64,
    pub unconstrained_revenue: f64,
}

/// `R(delta0) / R(inf)` with the fair revenue from the dynamic program on
/// at least `RHO_PRICE_POINTS` price points.
pub fn cost_of_fairness_numeric(
    model: &DemandModel,
    grid: &UtilityGrid,
    delta0: f64,
    eps: f64,
) -> Result<f64> {
    let config = DpConfig::with_price_points(RHO_PRICE_POINTS);
    Ok(cost_of_fairness_numeric_with(model, grid, delta0, eps, &config)?.rho)
}

pub fn cost_of_fairness_numeric_with(
    model: &DemandModel,
    grid: &UtilityGrid,
    delta0: f64,
    eps: f64,
    config: &DpConfig,
) -> Result<CostOfFairness> {
    let full = unconstrained_revenue(model, grid)?;
    if !(full > 0.0) {
        return Err(Error::UndefinedRatio(full));
    }
    let fair = solve_dp_with(model, grid, delta0, eps, config)?.objective;
    Ok(CostOfFairness {
        rho: fair / full,
        fair_revenue: fair,
        unconstrained_revenue: full,
    })
}
