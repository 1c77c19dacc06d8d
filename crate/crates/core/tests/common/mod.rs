#![allow(dead_code)]

use fairprice::demand::{DemandModel, LinkFunction};
use fairprice::estimation::Observation;
use fairprice::utility::UtilityGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small pricing instance: model, utility grid, budget and grid step.
#[derive(Debug, Clone)]
pub struct Instance {
    pub model: DemandModel,
    pub grid: UtilityGrid,
    pub delta0: f64,
    pub eps: f64,
}

pub const LINKS: [LinkFunction; 3] = [
    LinkFunction::Linear,
    LinkFunction::Logistic,
    LinkFunction::Exponential,
];

/// Random instance with at most `max_u` utility cells and exactly `mp` price
/// points when the dynamic program runs without refinement.
pub fn random_instance<R: Rng>(rng: &mut R, max_u: usize, mp: usize) -> Instance {
    let link = LINKS[rng.random_range(0..3)];
    let alpha = rng.random_range(0.5..2.0);
    let p_lo = rng.random_range(0.0..0.5);
    let p_hi = p_lo + rng.random_range(0.5..3.0);
    let model = DemandModel::new(link, vec![1.0], alpha, p_lo, p_hi).unwrap();
    let eps = rng.random_range(0.1..0.5);
    // range / (delta0 eps) lands just below mp so the grid has mp points
    let delta0 = (p_hi - p_lo) / (mp as f64 * eps) * (1.0 + 1e-9);
    let mu = rng.random_range(1..=max_u);
    let start = match link {
        LinkFunction::Exponential => model.price_slope() * p_hi + rng.random_range(0.0..1.0),
        _ => rng.random_range(-1.0..2.0),
    };
    let points: Vec<f64> = (0..mu).map(|k| start + eps * k as f64).collect();
    let mut weights: Vec<f64> = (0..mu)
        .map(|_| {
            if rng.random_bool(0.25) {
                0.0
            } else {
                rng.random_range(0.0..1.0)
            }
        })
        .collect();
    if weights.iter().all(|w| *w == 0.0) {
        weights[rng.random_range(0..mu)] = 1.0;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Instance {
        model,
        grid: UtilityGrid {
            points,
            weights,
            eps,
        },
        delta0,
        eps,
    }
}

/// Logistic demand with `theta = alpha = 1`, constant context and prices drawn
/// from {0.5, 3} with equal probability.
pub fn two_price_observations(seed: u64, n: usize) -> Vec<Observation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let p: f64 = if rng.random_bool(0.5) { 0.5 } else { 3.0 };
            let q = 1.0 / (1.0 + (0.5 * p - 1.0).exp());
            Observation {
                x: vec![1.0],
                p,
                y: if rng.random_bool(q) { 1.0 } else { 0.0 },
            }
        })
        .collect()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
