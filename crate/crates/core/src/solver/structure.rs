use crate::demand::{DemandModel, LinkFunction, ModelBounds};
use crate::error::{Error, Result};
use crate::numeric::golden_section_max;
use crate::solver::policy::PiecewiseLinearPolicy;
use crate::utility::{Moments, UtilityGrid};

const START_PRICE_TOL: f64 = 1e-9;

/// Raised when the fairness budget exceeds the range where the optimal fair
/// policy is known to be linear in utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureWarning {
    pub delta0: f64,
    pub limit: f64,
}

impl std::fmt::Display for StructureWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "delta0 = {} exceeds sigma_u / M_r = {}; a linear policy may not be optimal",
            self.delta0, self.limit
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicy {
    pub policy: PiecewiseLinearPolicy,
    /// Price at zero baseline utility, before trimming.
    pub pi0: f64,
    pub slope: f64,
    pub warning: Option<StructureWarning>,
}

/// Best policy of the form `u -> trim(pi0 + delta0 * u)`.
///
/// For the linear link the start price has a closed form; once `delta0`
/// reaches `1 / (2 c alpha0)` the unconstrained optimum `u / (2 c alpha0)` is
/// itself fair and is returned. Other links search `pi0` over
/// `[p_min - delta0 B, p_max + delta0 B]` on grid-quadrature revenue.
pub fn linear_optimal_policy(
    model: &DemandModel,
    grid: &UtilityGrid,
    moments: Moments,
    delta0: f64,
    bounds: &ModelBounds,
) -> Result<LinearPolicy> {
    if !(delta0 >= 0.0 && delta0.is_finite()) {
        return Err(Error::invalid(format!(
            "delta0 must be finite and non-negative, got {delta0}"
        )));
    }
    let (pi0, slope, warning) = match model.link {
        LinkFunction::Linear => {
            let s = 2.0 * model.price_slope();
            if delta0 * s >= 1.0 {
                (0.0, 1.0 / s, None)
            } else {
                (
                    (1.0 - s * delta0) * moments.mu / s,
                    delta0,
                    structure_warning(delta0, bounds),
                )
            }
        }
        _ => {
            let b = grid.points.iter().fold(bounds.b, |acc, u| acc.max(u.abs()));
            let (lo, hi) = (model.price_min - delta0 * b, model.price_max + delta0 * b);
            let objective = |pi0: f64| {
                grid.expectation(|u| {
                    Ok(model.revenue_or_neg_inf(u, model.clamp_price(pi0 + delta0 * u)))
                })
                .unwrap_or(f64::NEG_INFINITY)
            };
            let (pi0, _) = golden_section_max(objective, lo, hi, START_PRICE_TOL);
            (pi0, delta0, structure_warning(delta0, bounds))
        }
    };
    let policy = PiecewiseLinearPolicy::linear(
        pi0,
        slope,
        delta0,
        grid.points.clone(),
        model.price_min,
        model.price_max,
    )?;
    Ok(LinearPolicy {
        policy,
        pi0,
        slope,
        warning,
    })
}

fn structure_warning(delta0: f64, bounds: &ModelBounds) -> Option<StructureWarning> {
    let limit = bounds.linear_structure_limit();
    (delta0 > limit).then_some(StructureWarning { delta0, limit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::validate_bounds;
    use crate::solver::policy::{check_fairness, evaluate_policy_revenue};
    use crate::utility::{discretize, DistributionKind, UtilityDistribution};

    #[test]
    fn linear_start_price_closed_form() {
        let model = DemandModel::new(LinkFunction::Linear, vec![1.0], 1.0, 0.0, 3.0).unwrap();
        let dist = UtilityDistribution::uniform(0.0, 2.0, 2.0).unwrap();
        let grid = discretize(&dist, 2.0, 0.05).unwrap();
        let bounds = validate_bounds(&model, (-2.0, 2.0)).unwrap().bounds;
        let out = linear_optimal_policy(&model, &grid, dist.moments(), 0.5, &bounds).unwrap();
        assert!((out.pi0 - 0.5).abs() < 1e-12);
        assert!(out.warning.is_none());
        assert!(check_fairness(&out.policy, 0.5, 1e-9));

        let full = linear_optimal_policy(&model, &grid, dist.moments(), 1.0, &bounds).unwrap();
        assert_eq!(full.pi0, 0.0);
        for u in [0.1, 0.7, 1.9] {
            assert!(
                (full.policy.evaluate(u) - model.unconstrained_optimal_price(u).price).abs()
                    < 1e-12
            );
        }
    }

    #[test]
    fn logistic_start_price_matches_grid_search() {
        let model = DemandModel::new(LinkFunction::Logistic, vec![1.0], 1.0, 0.0, 4.0).unwrap();
        let dist = UtilityDistribution::new(DistributionKind::Normal, 1.0, 0.5, 3.0).unwrap();
        let grid = discretize(&dist, 3.0, 0.05).unwrap();
        let bounds = validate_bounds(&model, (-3.0, 3.0)).unwrap().bounds;
        let delta0 = 0.3;
        let out = linear_optimal_policy(&model, &grid, dist.moments(), delta0, &bounds).unwrap();
        let rev = |pi0: f64| {
            let p =
                PiecewiseLinearPolicy::linear(pi0, delta0, delta0, grid.points.clone(), 0.0, 4.0)
                    .unwrap();
            evaluate_policy_revenue(&p, &model, &grid).unwrap()
        };
        let (lo, hi) = (-0.9, 4.9);
        let n = ((hi - lo) / 1e-4) as usize;
        let best = (0..=n)
            .map(|i| lo + i as f64 * 1e-4)
            .fold((lo, f64::NEG_INFINITY), |acc, x| {
                let v = rev(x);
                if v > acc.1 {
                    (x, v)
                } else {
                    acc
                }
            });
        assert!((out.pi0 - best.0).abs() < 1e-3, "{} vs {}", out.pi0, best.0);
        assert!(check_fairness(&out.policy, delta0, 1e-9));
    }

    #[test]
    fn warning_above_structure_limit() {
        let model = DemandModel::new(LinkFunction::Logistic, vec![1.0], 4.0, 0.0, 2.0).unwrap();
        let dist = UtilityDistribution::uniform(-1.0, 1.0, 1.0).unwrap();
        let grid = discretize(&dist, 1.0, 0.1).unwrap();
        let bounds = validate_bounds(&model, (-1.0, 1.0)).unwrap().bounds;
        let limit = bounds.linear_structure_limit();
        let out =
            linear_optimal_policy(&model, &grid, dist.moments(), limit + 0.1, &bounds).unwrap();
        assert!(out.warning.is_some());
    }
}
