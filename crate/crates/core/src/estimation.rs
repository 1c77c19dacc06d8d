//! Maximum-likelihood estimation of utility weights and price sensitivity
//! from priced demand observations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::demand::{logistic, LinkFunction};
use crate::error::{Error, Result};

/// Below this argument the exponential-link log-likelihood is continued by
/// its second-order Taylor expansion, which stays concave and finite.
const EXP_EXTENSION_POINT: f64 = 1e-4;
const RANK_TOL: f64 = 1e-10;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const ROUNDOFF_DECREMENT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub p: f64,
    pub y: f64,
}

/// Per-observation log-likelihood `l(y | eta)` with `eta = z^T beta`,
/// `z = (x, -c p)` and `beta = (theta, alpha)`.
///
/// * linear: `-(y - eta)^2 / 2`
/// * logistic: `y eta - ln(1 + e^eta)`
/// * exponential: `y ln(1 - e^-eta) - (1 - y) eta`
///
/// Each is concave in `eta`, so the summed objective is concave in `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodSpec {
    pub link: LinkFunction,
    pub price_coeff: f64,
}

impl LikelihoodSpec {
    pub fn new(link: LinkFunction) -> Self {
        LikelihoodSpec {
            link,
            price_coeff: 0.5,
        }
    }

    pub fn with_price_coeff(link: LinkFunction, price_coeff: f64) -> Self {
        LikelihoodSpec { link, price_coeff }
    }

    /// Extended covariate `(x, -c p)`.
    pub fn extended(&self, obs: &Observation) -> Vec<f64> {
        let mut z = obs.x.clone();
        z.push(-self.price_coeff * obs.p);
        z
    }

    /// Value, first and second derivative of `l(y | eta)` in `eta`.
    pub fn point(&self, y: f64, eta: f64) -> (f64, f64, f64) {
        match self.link {
            LinkFunction::Linear => {
                let r = y - eta;
                (-0.5 * r * r, r, -1.0)
            }
            LinkFunction::Logistic => {
                let s = logistic(eta);
                let softplus = if eta > 0.0 {
                    eta + (-eta).exp().ln_1p()
                } else {
                    eta.exp().ln_1p()
                };
                (y * eta - softplus, y - s, -s * (1.0 - s))
            }
            LinkFunction::Exponential => {
                let (g, g1, g2) = if eta >= EXP_EXTENSION_POINT {
                    log_exp_link(eta)
                } else {
                    let (g0, g1, g2) = log_exp_link(EXP_EXTENSION_POINT);
                    let h = eta - EXP_EXTENSION_POINT;
                    (g0 + g1 * h + 0.5 * g2 * h * h, g1 + g2 * h, g2)
                };
                (y * g - (1.0 - y) * eta, y * g1 - (1.0 - y), y * g2)
            }
        }
    }
}

/// `ln(1 - e^-eta)` and its first two derivatives.
fn log_exp_link(eta: f64) -> (f64, f64, f64) {
    let em1 = eta.exp_m1();
    let value = (-(-eta).exp_m1()).ln();
    (value, 1.0 / em1, -(em1 + 1.0) / (em1 * em1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Summed log-likelihood over `data` with its exact gradient and Hessian.
pub fn log_likelihood(
    spec: &LikelihoodSpec,
    data: &[Observation],
    beta: &[f64],
) -> Result<LikelihoodEval> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let dim = beta.len();
    let mut value = 0.0;
    let mut gradient = DVector::zeros(dim);
    let mut hessian = DMatrix::zeros(dim, dim);
    let mut z = vec![0.0; dim];
    for obs in data {
        if obs.x.len() + 1 != dim {
            return Err(Error::invalid(format!(
                "observation has {} covariates but beta has {} entries",
                obs.x.len(),
                dim
            )));
        }
        z[..dim - 1].copy_from_slice(&obs.x);
        z[dim - 1] = -spec.price_coeff * obs.p;
        let eta: f64 = z.iter().zip(beta).map(|(a, b)| a * b).sum();
        let (l, l1, l2) = spec.point(obs.y, eta);
        value += l;
        for i in 0..dim {
            gradient[i] += l1 * z[i];
            for j in 0..=i {
                hessian[(i, j)] += l2 * z[i] * z[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            hessian[(j, i)] = hessian[(i, j)];
        }
    }
    Ok(LikelihoodEval {
        value,
        gradient,
        hessian,
    })
}

fn objective(spec: &LikelihoodSpec, data: &[Observation], beta: &[f64]) -> f64 {
    let mut total = 0.0;
    for obs in data {
        let eta: f64 = obs.x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
            - spec.price_coeff * obs.p * beta[beta.len() - 1];
        total += spec.point(obs.y, eta).0;
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEstimate {
    pub theta_hat: Vec<f64>,
    pub alpha_hat: f64,
    pub n_obs: usize,
    pub converged: bool,
    pub final_gradient_norm: f64,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diagnostic: Option<String>,
}

impl ModelEstimate {
    pub fn beta(&self) -> Vec<f64> {
        let mut b = self.theta_hat.clone();
        b.push(self.alpha_hat);
        b
    }
}

/// Starting point for the Newton iterations: zero, except a small positive
/// price sensitivity for the exponential link.
pub fn default_init(link: LinkFunction, d: usize) -> Vec<f64> {
    let mut b = vec![0.0; d + 1];
    if link == LinkFunction::Exponential {
        b[d] = 0.1;
    }
    b
}

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;

/// Smallest and largest eigenvalue of `Z^T Z`.
fn design_spectrum(spec: &LikelihoodSpec, data: &[Observation], dim: usize) -> (f64, f64) {
    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    for obs in data {
        let z = DVector::from_vec(spec.extended(obs));
        gram += &z * z.transpose();
    }
    let eig = SymmetricEigen::new(gram).eigenvalues;
    (eig.min(), eig.max())
}

/// Newton direction `(-H + lambda I)^{-1} g`, adding the smallest ridge that
/// makes the system positive definite.
fn newton_direction(eval: &LikelihoodEval) -> DVector<f64> {
    let neg = -&eval.hessian;
    if let Some(ch) = neg.clone().cholesky() {
        return ch.solve(&eval.gradient);
    }
    let dim = neg.nrows();
    let mut ridge = 1e-9;
    loop {
        let m = &neg + DMatrix::identity(dim, dim) * ridge;
        if let Some(ch) = m.cholesky() {
            return ch.solve(&eval.gradient);
        }
        ridge *= 10.0;
    }
}

/// Damped Newton ascent with Armijo backtracking on the concave
/// log-likelihood. Converged means the gradient norm reached `tol`; a
/// rank-deficient design is never reported as converged.
pub fn mle_fit(
    spec: &LikelihoodSpec,
    data: &[Observation],
    init: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<ModelEstimate> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let dim = init.len();
    if dim < 2 {
        return Err(Error::invalid(
            "beta needs at least one utility weight and a price sensitivity",
        ));
    }
    let mut diagnostic = None;
    if data.len() < dim {
        diagnostic = Some(format!(
            "{} observations for {} parameters",
            data.len(),
            dim
        ));
    }
    let (lo, hi) = design_spectrum(spec, data, dim);
    let rank_deficient = !(lo > RANK_TOL * hi.max(1.0));
    if rank_deficient {
        diagnostic = Some(format!(
            "rank-deficient design: smallest eigenvalue of Z^T Z is {lo:.3e} (largest {hi:.3e})"
        ));
    }

    let mut beta = DVector::from_column_slice(init);
    let mut eval = log_likelihood(spec, data, beta.as_slice())?;
    let mut iterations = 0;
    while iterations < max_iter && eval.gradient.norm() > tol {
        iterations += 1;
        let dir = newton_direction(&eval);
        let slope = eval.gradient.dot(&dir);
        // objective differences this small are below round-off, so the
        // sufficient-increase test is meaningless; take the Newton step
        let mut accepted =
            (slope <= ROUNDOFF_DECREMENT * eval.value.abs().max(1.0)).then(|| &beta + &dir);
        let mut step = 1.0;
        let mut halvings = 0;
        while accepted.is_none() && halvings < MAX_HALVINGS {
            let cand = &beta + &dir * step;
            let v = objective(spec, data, cand.as_slice());
            if v.is_finite() && v >= eval.value + ARMIJO_C * step * slope {
                accepted = Some(cand);
            }
            step *= 0.5;
            halvings += 1;
        }
        match accepted {
            Some(next) => {
                beta = next;
                eval = log_likelihood(spec, data, beta.as_slice())?;
            }
            None => break,
        }
    }
    let gnorm = eval.gradient.norm();
    let d = dim - 1;
    Ok(ModelEstimate {
        theta_hat: beta.as_slice()[..d].to_vec(),
        alpha_hat: beta[d],
        n_obs: data.len(),
        converged: gnorm <= tol && !rank_deficient,
        final_gradient_norm: gnorm,
        iterations,
        diagnostic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LINKS: [LinkFunction; 3] = [
        LinkFunction::Linear,
        LinkFunction::Logistic,
        LinkFunction::Exponential,
    ];

    fn obs(x: Vec<f64>, p: f64, y: f64) -> Observation {
        Observation { x, p, y }
    }

    fn random_data(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Observation> {
        (0..n)
            .map(|_| {
                let x = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
                let p = rng.random_range(0.0..2.0);
                let y = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
                obs(x, p, y)
            })
            .collect()
    }

    #[test]
    fn reference_values() {
        let spec = LikelihoodSpec::new(LinkFunction::Linear);
        let beta = [0.7, 0.4];
        let o = obs(vec![1.0], 0.5, 0.7 - 0.5 * 0.5 * 0.4);
        let ev = log_likelihood(&spec, &[o], &beta).unwrap();
        assert!(ev.value.abs() < 1e-15);
        assert!(ev.gradient.norm() < 1e-15);

        let spec = LikelihoodSpec::new(LinkFunction::Logistic);
        let ev = log_likelihood(&spec, &[obs(vec![0.0], 0.0, 1.0)], &[0.3, 0.2]).unwrap();
        assert!((ev.value + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(matches!(
            log_likelihood(&spec, &[], &[0.0, 0.0]),
            Err(Error::EmptyData)
        ));
    }

    #[test]
    fn gradient_and_hessian_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for link in LINKS {
            let spec = LikelihoodSpec::new(link);
            for _ in 0..20 {
                let data = random_data(&mut rng, 5, 2);
                let beta: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..1.5)).collect();
                let ev = log_likelihood(&spec, &data, &beta).unwrap();
                for i in 0..3 {
                    let mut up = beta.clone();
                    let mut dn = beta.clone();
                    up[i] += h;
                    dn[i] -= h;
                    let fu = log_likelihood(&spec, &data, &up).unwrap();
                    let fd = log_likelihood(&spec, &data, &dn).unwrap();
                    let g = (fu.value - fd.value) / (2.0 * h);
                    let scale = 1.0 + ev.gradient[i].abs();
                    assert!(
                        (g - ev.gradient[i]).abs() <= 1e-5 * scale,
                        "{link:?} grad {i}"
                    );
                    for j in 0..3 {
                        let hd = (fu.gradient[j] - fd.gradient[j]) / (2.0 * h);
                        let scale = 1.0 + ev.hessian[(i, j)].abs();
                        assert!(
                            (hd - ev.hessian[(i, j)]).abs() <= 1e-5 * scale,
                            "{link:?} hess {i},{j}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn hessian_is_negative_semidefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for link in LINKS {
            let spec = LikelihoodSpec::new(link);
            for _ in 0..50 {
                let data = random_data(&mut rng, 8, 3);
                let beta: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
                let ev = log_likelihood(&spec, &data, &beta).unwrap();
                let scale = ev.hessian.amax().max(1.0);
                let top = SymmetricEigen::new(ev.hessian).eigenvalues.max();
                assert!(top <= 1e-10 * scale, "{link:?}: {top} at scale {scale}");
            }
        }
    }

    #[test]
    fn exponential_extension_is_smooth_at_the_joint() {
        let spec = LikelihoodSpec::new(LinkFunction::Exponential);
        let below = spec.point(0.6, EXP_EXTENSION_POINT - 1e-12);
        let above = spec.point(0.6, EXP_EXTENSION_POINT + 1e-12);
        assert!((below.0 - above.0).abs() < 1e-6);
        assert!((below.1 - above.1).abs() / above.1.abs() < 1e-6);
        assert!(spec.point(1.0, -3.0).0.is_finite());
    }

    #[test]
    fn noiseless_linear_fit_is_exact() {
        let spec = LikelihoodSpec::new(LinkFunction::Linear);
        let truth = [0.8, -0.3, 1.2];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<Observation> = (0..40)
            .map(|_| {
                let x = vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
                let p = rng.random_range(0.0..2.0);
                let y = x[0] * truth[0] + x[1] * truth[1] - 0.5 * p * truth[2];
                obs(x, p, y)
            })
            .collect();
        let est = mle_fit(
            &spec,
            &data,
            &default_init(spec.link, 2),
            DEFAULT_TOL,
            DEFAULT_MAX_ITER,
        )
        .unwrap();
        assert!(est.converged);
        for (a, b) in est.beta().iter().zip(truth) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn identical_observations_are_rank_deficient() {
        let spec = LikelihoodSpec::new(LinkFunction::Logistic);
        let data: Vec<Observation> = (0..20)
            .map(|i| obs(vec![1.0], 0.5, (i % 2) as f64))
            .collect();
        let est = mle_fit(&spec, &data, &[0.0, 0.0], DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(!est.converged);
        assert!(est.diagnostic.unwrap().contains("rank-deficient"));
    }

    #[test]
    fn logistic_fit_recovers_parameters() {
        let spec = LikelihoodSpec::new(LinkFunction::Logistic);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<Observation> = (0..10_000)
            .map(|_| {
                let p = if rng.random_bool(0.5) { 0.5 } else { 3.0 };
                let q = logistic(1.0 - 0.5 * p);
                obs(vec![1.0], p, if rng.random_bool(q) { 1.0 } else { 0.0 })
            })
            .collect();
        let est = mle_fit(&spec, &data, &[0.0, 0.0], DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(est.converged);
        let err = ((est.theta_hat[0] - 1.0).powi(2) + (est.alpha_hat - 1.0).powi(2)).sqrt();
        assert!(err < 0.2, "{err}");
    }
}
