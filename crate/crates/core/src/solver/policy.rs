use serde::{Deserialize, Serialize};

use crate::demand::DemandModel;
use crate::error::{Error, Result};
use crate::utility::UtilityGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyForm {
    /// Linear interpolation between knot prices.
    Interpolated,
    /// `clamp(pi0 + slope * u)` on the price interval.
    Linear { pi0: f64, slope: f64 },
}

/// A pricing policy as a function of baseline utility.
///
/// Between knots the price is interpolated linearly; outside the knot range
/// the nearest knot price is used. Linear-form policies evaluate their closed
/// form (trimmed to the price interval) and carry knot samples of it.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearPolicy {
    pub knots: Vec<f64>,
    pub prices: Vec<f64>,
    pub delta0: f64,
    pub form: PolicyForm,
    pub price_min: f64,
    pub price_max: f64,
}

impl PiecewiseLinearPolicy {
    pub fn interpolated(knots: Vec<f64>, prices: Vec<f64>, delta0: f64) -> Result<Self> {
        if knots.is_empty() || knots.len() != prices.len() {
            return Err(Error::invalid(format!(
                "policy needs matching non-empty knots and prices (got {} and {})",
                knots.len(),
                prices.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("policy knots must be strictly increasing"));
        }
        let (lo, hi) = prices
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(*p), hi.max(*p))
            });
        Ok(PiecewiseLinearPolicy {
            knots,
            prices,
            delta0,
            form: PolicyForm::Interpolated,
            price_min: lo,
            price_max: hi,
        })
    }

    /// `u -> clamp(pi0 + slope * u, price_min, price_max)` sampled at `knots`.
    pub fn linear(
        pi0: f64,
        slope: f64,
        delta0: f64,
        knots: Vec<f64>,
        price_min: f64,
        price_max: f64,
    ) -> Result<Self> {
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("policy knots must be strictly increasing"));
        }
        let prices = knots
            .iter()
            .map(|u| (pi0 + slope * u).clamp(price_min, price_max))
            .collect();
        Ok(PiecewiseLinearPolicy {
            knots,
            prices,
            delta0,
            form: PolicyForm::Linear { pi0, slope },
            price_min,
            price_max,
        })
    }

    pub fn evaluate(&self, u: f64) -> f64 {
        match self.form {
            PolicyForm::Linear { pi0, slope } => {
                (pi0 + slope * u).clamp(self.price_min, self.price_max)
            }
            PolicyForm::Interpolated => self.interpolate(u),
        }
    }

    fn interpolate(&self, u: f64) -> f64 {
        let n = self.knots.len();
        if u <= self.knots[0] {
            return self.prices[0];
        }
        if u >= self.knots[n - 1] {
            return self.prices[n - 1];
        }
        let i = self.knots.partition_point(|k| *k <= u) - 1;
        let (u0, u1) = (self.knots[i], self.knots[i + 1]);
        let t = (u - u0) / (u1 - u0);
        self.prices[i] + t * (self.prices[i + 1] - self.prices[i])
    }

    /// Largest absolute slope between consecutive knots (and of the linear
    /// form itself, when present).
    pub fn max_slope(&self) -> f64 {
        let knot_slope = self
            .knots
            .windows(2)
            .zip(self.prices.windows(2))
            .map(|(k, p)| (p[1] - p[0]).abs() / (k[1] - k[0]))
            .fold(0.0, f64::max);
        match self.form {
            PolicyForm::Linear { slope, .. } => knot_slope.max(slope.abs()),
            PolicyForm::Interpolated => knot_slope,
        }
    }

    pub fn pi0(&self) -> Option<f64> {
        match self.form {
            PolicyForm::Linear { pi0, .. } => Some(pi0),
            PolicyForm::Interpolated => None,
        }
    }
}

/// Whether `policy` is `delta0`-Lipschitz in utility, up to `tol` on slopes.
/// For piecewise-linear maps the knot slopes decide this exactly.
pub fn check_fairness(policy: &PiecewiseLinearPolicy, delta0: f64, tol: f64) -> bool {
    policy.max_slope() <= delta0 + tol
}

/// Expected revenue `sum_k gamma_k r_{u_k}(policy(u_k))` on a utility grid.
pub fn evaluate_policy_revenue(
    policy: &PiecewiseLinearPolicy,
    model: &DemandModel,
    grid: &UtilityGrid,
) -> Result<f64> {
    grid.expectation(|u| model.expected_revenue(u, policy.evaluate(u)))
}
