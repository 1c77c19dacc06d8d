//! Generalized-linear demand: link functions, expected revenue, unconstrained
//! optimal prices and the regularity constants the solvers rely on.
//!
//! Expected demand for a customer with baseline utility `u` offered price `p`
//! is `f(u - c * alpha0 * p)`, where `c` is [`DemandModel::price_coeff`]. The
//! default `c = 0.5` gives the revenue curve `p * (u - alpha0 * p / 2)` for the
//! identity link, whose unconstrained maximizer is `u / alpha0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{golden_section_max, linspace};

/// Absolute tolerance used by the golden-section price search.
pub const PRICE_SEARCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFunction {
    /// `f(u) = u`
    Linear,
    /// `f(u) = e^u / (1 + e^u)`
    Logistic,
    /// `f(u) = 1 - e^{-u}`, defined for `u >= 0` only.
    Exponential,
}

impl LinkFunction {
    pub fn name(self) -> &'static str {
        match self {
            LinkFunction::Linear => "linear",
            LinkFunction::Logistic => "logistic",
            LinkFunction::Exponential => "exponential",
        }
    }

    /// Smallest argument at which the link is defined, if bounded below.
    pub fn domain_min(self) -> Option<f64> {
        match self {
            LinkFunction::Exponential => Some(0.0),
            _ => None,
        }
    }

    fn check(self, u: f64) -> Result<()> {
        match self.domain_min() {
            Some(lo) if u < lo => Err(Error::Domain {
                link: self.name(),
                u,
            }),
            _ => Ok(()),
        }
    }

    pub fn value(self, u: f64) -> Result<f64> {
        self.check(u)?;
        Ok(match self {
            LinkFunction::Linear => u,
            LinkFunction::Logistic => logistic(u),
            LinkFunction::Exponential => -(-u).exp_m1(),
        })
    }

    pub fn derivative(self, u: f64) -> Result<f64> {
        self.check(u)?;
        Ok(match self {
            LinkFunction::Linear => 1.0,
            LinkFunction::Logistic => {
                let s = logistic(u);
                s * (1.0 - s)
            }
            LinkFunction::Exponential => (-u).exp(),
        })
    }

    pub fn second_derivative(self, u: f64) -> Result<f64> {
        self.check(u)?;
        Ok(match self {
            LinkFunction::Linear => 0.0,
            LinkFunction::Logistic => {
                let s = logistic(u);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            LinkFunction::Exponential => -(-u).exp(),
        })
    }
}

/// Numerically stable logistic sigmoid.
pub(crate) fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Evaluates `f(u)` for the given link.
pub fn link_eval(link: LinkFunction, u: f64) -> Result<f64> {
    link.value(u)
}

fn default_price_coeff() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandModel {
    pub link: LinkFunction,
    pub theta0: Vec<f64>,
    pub alpha0: f64,
    #[serde(default = "default_price_coeff")]
    pub price_coeff: f64,
    #[serde(rename = "price_min")]
    pub price_min: f64,
    #[serde(rename = "price_max")]
    pub price_max: f64,
}

/// Result of [`DemandModel::unconstrained_optimal_price`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalPrice {
    pub price: f64,
    /// False when the maximizer sits on the price boundary.
    pub interior: bool,
}

impl DemandModel {
    pub fn new(
        link: LinkFunction,
        theta0: Vec<f64>,
        alpha0: f64,
        price_min: f64,
        price_max: f64,
    ) -> Result<Self> {
        let model = DemandModel {
            link,
            theta0,
            alpha0,
            price_coeff: default_price_coeff(),
            price_min,
            price_max,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_price_coeff(mut self, c: f64) -> Result<Self> {
        self.price_coeff = c;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(Error::invalid(format!(
                "alpha0 must be positive, got {}",
                self.alpha0
            )));
        }
        if !(self.price_coeff > 0.0 && self.price_coeff.is_finite()) {
            return Err(Error::invalid(format!(
                "price_coeff must be positive, got {}",
                self.price_coeff
            )));
        }
        if !(self.price_min >= 0.0 && self.price_min < self.price_max && self.price_max.is_finite())
        {
            return Err(Error::invalid(format!(
                "price interval must satisfy 0 <= min < max, got [{}, {}]",
                self.price_min, self.price_max
            )));
        }
        if self.theta0.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("theta0 contains a non-finite entry"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.theta0.len()
    }

    /// Coefficient on price inside the link argument, `c * alpha0`.
    pub fn price_slope(&self) -> f64 {
        self.price_coeff * self.alpha0
    }

    pub fn demand_argument(&self, u: f64, p: f64) -> f64 {
        u - self.price_slope() * p
    }

    /// Baseline utility `x^T theta0`.
    pub fn baseline_utility(&self, x: &[f64]) -> f64 {
        dot(x, &self.theta0)
    }

    pub fn expected_demand(&self, u: f64, p: f64) -> Result<f64> {
        self.link.value(self.demand_argument(u, p))
    }

    /// `r_u(p) = p * f(u - c * alpha0 * p)`.
    pub fn expected_revenue(&self, u: f64, p: f64) -> Result<f64> {
        Ok(p * self.expected_demand(u, p)?)
    }

    /// Revenue with undefined points mapped to negative infinity, for searches.
    pub(crate) fn revenue_or_neg_inf(&self, u: f64, p: f64) -> f64 {
        self.expected_revenue(u, p).unwrap_or(f64::NEG_INFINITY)
    }

    /// Second derivative of `r_u` in price.
    pub fn revenue_second_derivative(&self, u: f64, p: f64) -> Result<f64> {
        let v = self.demand_argument(u, p);
        let s = self.price_slope();
        Ok(-2.0 * s * self.link.derivative(v)? + s * s * p * self.link.second_derivative(v)?)
    }

    pub fn clamp_price(&self, p: f64) -> f64 {
        p.clamp(self.price_min, self.price_max)
    }

    /// Revenue-maximizing price for baseline utility `u` without fairness
    /// constraints, restricted to the price interval.
    pub fn unconstrained_optimal_price(&self, u: f64) -> OptimalPrice {
        let (lo, hi) = (self.price_min, self.price_max);
        let price = match self.link {
            LinkFunction::Linear => self.clamp_price(u / (2.0 * self.price_slope())),
            _ => golden_section_max(|p| self.revenue_or_neg_inf(u, p), lo, hi, PRICE_SEARCH_TOL).0,
        };
        let margin = 10.0 * PRICE_SEARCH_TOL;
        OptimalPrice {
            price,
            interior: price > lo + margin && price < hi - margin,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Regularity constants of a demand model over a utility and price domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelBounds {
    /// Bound on `|u|`.
    pub b: f64,
    /// Bound on `|u - c * alpha0 * p|`.
    pub b_tilde: f64,
    /// Uniform bound on `|f|`, `|f'|`, `|f''|` over `[-b_tilde, b_tilde]`.
    pub l_f: f64,
    /// Smallest curvature `-r_u''(p*(u))` over the utility mesh.
    pub sigma_r: f64,
    /// Largest `|r_u''(p)|` over the utility-price mesh.
    pub m_r: f64,
    pub sigma_u: f64,
}

impl ModelBounds {
    /// Largest fairness budget for which the optimal fair policy is guaranteed
    /// to be linear in utility; zero when `sigma_u <= 0`.
    pub fn linear_structure_limit(&self) -> f64 {
        if self.sigma_u > 0.0 && self.m_r > 0.0 {
            self.sigma_u / self.m_r
        } else {
            0.0
        }
    }

    /// Approximation error of the discretized fair policy, `4 L_f delta0 eps`.
    pub fn approximation_budget(&self, delta0: f64, eps: f64) -> f64 {
        4.0 * self.l_f * delta0 * eps
    }
}

/// A point of the scanned domain where expected demand leaves `[0, 1]` (or the
/// link is undefined, in which case `demand` is NaN).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeViolation {
    pub u: f64,
    pub p: f64,
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub bounds: ModelBounds,
    pub violations: Vec<RangeViolation>,
}

impl BoundsReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

const SCAN_POINTS: usize = 201;
const SIGMA_U_POINTS: usize = 1001;

/// `min f'(u) - c * alpha0 * p_max * |f''(u)|` over an `n_grid`-point mesh of
/// `[-b_tilde, b_tilde]` (clipped to the link domain). With the default
/// `c = 0.5` this is `f' - (alpha0 * p_max / 2) |f''|`.
pub fn compute_sigma_u(model: &DemandModel, bounds: &mut ModelBounds, n_grid: usize) -> f64 {
    let lo = match model.link.domain_min() {
        Some(m) => m.max(-bounds.b_tilde),
        None => -bounds.b_tilde,
    };
    let weight = model.price_slope() * model.price_max;
    let sigma_u = linspace(lo, bounds.b_tilde.max(lo), n_grid.max(2))
        .into_iter()
        .filter_map(|u| {
            let d1 = model.link.derivative(u).ok()?;
            let d2 = model.link.second_derivative(u).ok()?;
            Some(d1 - weight * d2.abs())
        })
        .fold(f64::INFINITY, f64::min);
    bounds.sigma_u = sigma_u;
    sigma_u
}

/// Scans `utility_range x [price_min, price_max]` to estimate the model's
/// regularity constants and report where expected demand leaves `[0, 1]`.
pub fn validate_bounds(model: &DemandModel, utility_range: (f64, f64)) -> Result<BoundsReport> {
    model.validate()?;
    let (u_lo, u_hi) = utility_range;
    if !(u_lo <= u_hi) {
        return Err(Error::invalid(format!(
            "empty utility range [{u_lo}, {u_hi}]"
        )));
    }
    let b = u_lo.abs().max(u_hi.abs());
    let s = model.price_slope();
    let b_tilde = [u_lo, u_hi]
        .iter()
        .flat_map(|u| [model.price_min, model.price_max].map(|p| (u - s * p).abs()))
        .fold(b, f64::max);

    let link_lo = model
        .link
        .domain_min()
        .map_or(-b_tilde, |m| m.max(-b_tilde));
    let l_f = linspace(link_lo, b_tilde.max(link_lo), SIGMA_U_POINTS)
        .into_iter()
        .filter_map(|v| {
            Some(
                model
                    .link
                    .value(v)
                    .ok()?
                    .abs()
                    .max(model.link.derivative(v).ok()?.abs())
                    .max(model.link.second_derivative(v).ok()?.abs()),
            )
        })
        .fold(0.0, f64::max);

    let us = linspace(u_lo, u_hi, SCAN_POINTS);
    let ps = linspace(model.price_min, model.price_max, SCAN_POINTS);
    let mut violations = Vec::new();
    let mut m_r: f64 = 0.0;
    for &u in &us {
        for &p in &ps {
            match model.expected_demand(u, p) {
                Ok(q) if (0.0..=1.0).contains(&q) => {}
                Ok(q) => violations.push(RangeViolation { u, p, demand: q }),
                Err(_) => violations.push(RangeViolation {
                    u,
                    p,
                    demand: f64::NAN,
                }),
            }
            if let Ok(r2) = model.revenue_second_derivative(u, p) {
                m_r = m_r.max(r2.abs());
            }
        }
    }
    let sigma_r = us
        .iter()
        .filter_map(|&u| {
            let p = model.unconstrained_optimal_price(u).price;
            model.revenue_second_derivative(u, p).ok().map(|r2| -r2)
        })
        .fold(f64::INFINITY, f64::min);

    let mut bounds = ModelBounds {
        b,
        b_tilde,
        l_f,
        sigma_r,
        m_r,
        sigma_u: f64::NAN,
    };
    compute_sigma_u(model, &mut bounds, SIGMA_U_POINTS);
    Ok(BoundsReport { bounds, violations })
}
