//! Baseline-utility distributions, their discretization onto the solver grid,
//! and context generators whose utilities follow them.
//!
//! Every distribution is clipped to `[-B, B]`: draws are clamped, so mass
//! beyond the clip sits at the endpoints. Laplace and Student-t(3) are
//! re-centred and re-scaled after clipping so that the clipped mean and
//! standard deviation match the requested `mu` and `sigma`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Laplace, Normal, StudentsT};

use crate::error::{Error, Result};

const SQRT_3: f64 = 1.732_050_807_568_877_2;
const QUAD_INTERVALS: usize = 20_000;
const MC_SEED: u64 = 0x5eed_0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    Uniform,
    Normal,
    Laplace,
    #[serde(rename = "student_t3")]
    StudentT3,
    PointMass,
    Empirical,
}

/// First moment and second raw moment of a utility distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mu: f64,
    pub nu_sq: f64,
}

impl Moments {
    pub fn variance(&self) -> f64 {
        (self.nu_sq - self.mu * self.mu).max(0.0)
    }
}

#[derive(Debug, Clone)]
enum Shape {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Normal(Normal),
    Laplace(Laplace),
    StudentT3 {
        loc: f64,
        scale: f64,
        cdf: StudentsT,
    },
    Point(f64),
    /// Sorted samples.
    Empirical(Vec<f64>),
}

impl Shape {
    fn build(kind: DistributionKind, loc: f64, scale: f64) -> Result<Shape> {
        let bad = |e: statrs::distribution::NormalError| Error::invalid(e.to_string());
        Ok(match kind {
            _ if scale == 0.0 && kind != DistributionKind::Empirical => Shape::Point(loc),
            DistributionKind::Uniform => Shape::Uniform {
                lo: loc - SQRT_3 * scale,
                hi: loc + SQRT_3 * scale,
            },
            DistributionKind::Normal => Shape::Normal(Normal::new(loc, scale).map_err(bad)?),
            DistributionKind::Laplace => Shape::Laplace(
                Laplace::new(loc, scale / std::f64::consts::SQRT_2)
                    .map_err(|e| Error::invalid(e.to_string()))?,
            ),
            DistributionKind::StudentT3 => Shape::StudentT3 {
                loc,
                scale: scale / SQRT_3,
                cdf: StudentsT::new(loc, scale / SQRT_3, 3.0)
                    .map_err(|e| Error::invalid(e.to_string()))?,
            },
            DistributionKind::PointMass => Shape::Point(loc),
            DistributionKind::Empirical => unreachable!("empirical shapes are built from samples"),
        })
    }

    fn cdf(&self, x: f64) -> f64 {
        match self {
            Shape::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Shape::Normal(d) => d.cdf(x),
            Shape::Laplace(d) => d.cdf(x),
            Shape::StudentT3 { cdf, .. } => cdf.cdf(x),
            Shape::Point(c) => {
                if x >= *c {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Empirical(s) => s.partition_point(|v| *v <= x) as f64 / s.len() as f64,
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        match self {
            Shape::Uniform { lo, hi } => {
                if (*lo..=*hi).contains(&x) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Shape::Normal(d) => d.pdf(x),
            Shape::Laplace(d) => d.pdf(x),
            Shape::StudentT3 { cdf, .. } => cdf.pdf(x),
            Shape::Point(_) | Shape::Empirical(_) => 0.0,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Shape::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Shape::Normal(d) => {
                let z: f64 = StandardNormal.sample(rng);
                d.mean().unwrap_or(0.0) + d.std_dev().unwrap_or(0.0) * z
            }
            Shape::Laplace(d) => {
                let v = rng.random::<f64>() - 0.5;
                d.location() - d.scale() * v.signum() * (1.0 - 2.0 * v.abs()).ln()
            }
            Shape::StudentT3 { loc, scale, .. } => {
                let t: f64 = StudentT::new(3.0)
                    .expect("3 degrees of freedom")
                    .sample(rng);
                loc + scale * t
            }
            Shape::Point(c) => *c,
            Shape::Empirical(s) => s[rng.random_range(0..s.len())],
        }
    }
}

use statrs::statistics::Distribution as _;

/// A baseline-utility distribution clipped to `[-clip, clip]`.
#[derive(Debug, Clone)]
pub struct UtilityDistribution {
    kind: DistributionKind,
    location: f64,
    scale: f64,
    clip: f64,
    shape: Shape,
}

impl PartialEq for UtilityDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.location == other.location
            && self.scale == other.scale
            && self.clip == other.clip
    }
}

impl UtilityDistribution {
    /// Builds a parametric distribution with clipped mean `mu` and standard
    /// deviation `sigma` (targets for Laplace/Student-t(3), raw parameters for
    /// the others).
    pub fn new(kind: DistributionKind, mu: f64, sigma: f64, clip: f64) -> Result<Self> {
        if kind == DistributionKind::Empirical {
            return Err(Error::invalid(
                "use UtilityDistribution::empirical for sample-based distributions",
            ));
        }
        if !(sigma >= 0.0 && sigma.is_finite() && mu.is_finite()) {
            return Err(Error::invalid(format!(
                "invalid location/scale ({mu}, {sigma})"
            )));
        }
        if !(clip > 0.0 && clip.is_finite()) {
            return Err(Error::invalid(format!(
                "clip bound must be positive, got {clip}"
            )));
        }
        let shape = match kind {
            DistributionKind::Laplace | DistributionKind::StudentT3 if sigma > 0.0 => {
                corrected_shape(kind, mu, sigma, clip)?
            }
            _ => Shape::build(kind, mu, sigma)?,
        };
        Ok(UtilityDistribution {
            kind,
            location: mu,
            scale: sigma,
            clip,
            shape,
        })
    }

    pub fn uniform(lo: f64, hi: f64, clip: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::invalid(format!(
                "empty uniform support [{lo}, {hi}]"
            )));
        }
        Self::new(
            DistributionKind::Uniform,
            0.5 * (lo + hi),
            (hi - lo) / (2.0 * SQRT_3),
            clip,
        )
    }

    pub fn point_mass(at: f64, clip: f64) -> Result<Self> {
        Self::new(DistributionKind::PointMass, at, 0.0, clip)
    }

    pub fn empirical(mut samples: Vec<f64>, clip: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyData);
        }
        if !(clip > 0.0) {
            return Err(Error::invalid(format!(
                "clip bound must be positive, got {clip}"
            )));
        }
        for s in samples.iter_mut() {
            *s = s.clamp(-clip, clip);
        }
        samples.sort_by(f64::total_cmp);
        let n = samples.len() as f64;
        let mu = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>() / n;
        Ok(UtilityDistribution {
            kind: DistributionKind::Empirical,
            location: mu,
            scale: var.sqrt(),
            clip,
            shape: Shape::Empirical(samples),
        })
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn location(&self) -> f64 {
        self.location
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    /// Sorted clipped samples of an empirical distribution.
    pub fn samples(&self) -> Option<&[f64]> {
        match &self.shape {
            Shape::Empirical(s) => Some(s),
            _ => None,
        }
    }

    /// CDF of the clipped variable.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < -self.clip {
            0.0
        } else if x >= self.clip {
            1.0
        } else {
            self.shape.cdf(x)
        }
    }

    /// Mean and second raw moment of the clipped distribution.
    pub fn moments(&self) -> Moments {
        let b = self.clip;
        match &self.shape {
            Shape::Point(c) => {
                let c = c.clamp(-b, b);
                Moments {
                    mu: c,
                    nu_sq: c * c,
                }
            }
            Shape::Uniform { lo, hi } => {
                let (lo, hi) = (*lo, *hi);
                let w = hi - lo;
                let (a, c) = (lo.max(-b), hi.min(b));
                let below = ((-b - lo) / w).clamp(0.0, 1.0);
                let above = ((hi - b) / w).clamp(0.0, 1.0);
                let (m1, m2) = if a < c {
                    (
                        (c * c - a * a) / (2.0 * w),
                        (c * c * c - a * a * a) / (3.0 * w),
                    )
                } else {
                    (0.0, 0.0)
                };
                Moments {
                    mu: m1 - b * below + b * above,
                    nu_sq: m2 + b * b * (below + above),
                }
            }
            Shape::Normal(d) => {
                let (m, s) = (d.mean().unwrap_or(0.0), d.std_dev().unwrap_or(0.0));
                let (lo, hi) = ((-b - m) / s, (b - m) / s);
                let std = Normal::standard();
                let (p_lo, p_hi) = (std.cdf(lo), std.cdf(hi));
                let (f_lo, f_hi) = (std.pdf(lo), std.pdf(hi));
                let mass = p_hi - p_lo;
                let m1 = m * mass + s * (f_lo - f_hi);
                let m2 = m * m * mass
                    + 2.0 * m * s * (f_lo - f_hi)
                    + s * s * (lo * f_lo - hi * f_hi + mass);
                let above = 1.0 - p_hi;
                Moments {
                    mu: m1 - b * p_lo + b * above,
                    nu_sq: m2 + b * b * (p_lo + above),
                }
            }
            Shape::Laplace(_) | Shape::StudentT3 { .. } => {
                clipped_moments_by_quadrature(&self.shape, b)
            }
            Shape::Empirical(s) => {
                let n = s.len() as f64;
                Moments {
                    mu: s.iter().sum::<f64>() / n,
                    nu_sq: s.iter().map(|v| v * v).sum::<f64>() / n,
                }
            }
        }
    }

    /// Monte-Carlo estimate of the moments with their standard errors.
    pub fn moments_monte_carlo(&self, n: usize, seed: u64) -> (Moments, Moments) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let u = self.sample(&mut rng);
            let u2 = u * u;
            s1 += u;
            s2 += u2;
            s3 += u2;
            s4 += u2 * u2;
        }
        let nf = n as f64;
        let mu = s1 / nf;
        let nu_sq = s2 / nf;
        let se_mu = ((s3 / nf - mu * mu).max(0.0) / nf).sqrt();
        let se_nu = ((s4 / nf - nu_sq * nu_sq).max(0.0) / nf).sqrt();
        (
            Moments { mu, nu_sq },
            Moments {
                mu: se_mu,
                nu_sq: se_nu,
            },
        )
    }

    /// Moments from a fixed-seed Monte-Carlo run of a million draws.
    pub fn moments_sampled(&self) -> Moments {
        self.moments_monte_carlo(1_000_000, MC_SEED).0
    }
}

impl Distribution<f64> for UtilityDistribution {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.shape.sample(rng).clamp(-self.clip, self.clip)
    }
}

/// One clipped draw from `dist`.
pub fn sample_utility<R: Rng + ?Sized>(dist: &UtilityDistribution, rng: &mut R) -> f64 {
    dist.sample(rng)
}

fn clipped_moments_by_quadrature(shape: &Shape, b: f64) -> Moments {
    let n = QUAD_INTERVALS;
    let h = 2.0 * b / n as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for i in 0..=n {
        let x = if i == n { b } else { -b + h * i as f64 };
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let f = shape.pdf(x) * w;
        m1 += f * x;
        m2 += f * x * x;
    }
    m1 *= h / 3.0;
    m2 *= h / 3.0;
    let below = shape.cdf(-b);
    let above = 1.0 - shape.cdf(b);
    Moments {
        mu: m1 - b * below + b * above,
        nu_sq: m2 + b * b * (below + above),
    }
}

/// Finds underlying parameters whose clipped mean and standard deviation hit
/// the targets.
fn corrected_shape(kind: DistributionKind, mu: f64, sigma: f64, clip: f64) -> Result<Shape> {
    if mu.abs() >= clip {
        return Err(Error::invalid(format!(
            "mean {mu} lies outside the clip [-{clip}, {clip}]"
        )));
    }
    let (mut loc, mut scale) = (mu, sigma);
    let mut shape = Shape::build(kind, loc, scale)?;
    for _ in 0..200 {
        let m = clipped_moments_by_quadrature(&shape, clip);
        let sd = (m.nu_sq - m.mu * m.mu).max(0.0).sqrt();
        if (m.mu - mu).abs() <= 1e-9 * (1.0 + mu.abs()) && (sd - sigma).abs() <= 1e-9 * sigma {
            return Ok(shape);
        }
        loc += mu - m.mu;
        scale *= sigma / sd.max(1e-300);
        shape = Shape::build(kind, loc, scale)?;
    }
    let m = clipped_moments_by_quadrature(&shape, clip);
    let sd = (m.nu_sq - m.mu * m.mu).max(0.0).sqrt();
    if (m.mu - mu).abs() <= 0.01 * sigma && (sd - sigma).abs() <= 0.01 * sigma {
        Ok(shape)
    } else {
        Err(Error::invalid(format!(
            "cannot match mean {mu} and sd {sigma} within clip {clip}"
        )))
    }
}

/// Discretized utility support: cell centres `points` spaced by `eps` with
/// cell probabilities `weights`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityGrid {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub eps: f64,
}

impl UtilityGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the knot nearest to `u` (lower index on ties).
    pub fn nearest(&self, u: f64) -> usize {
        let first = self.points[0];
        let k = ((u - first) / self.eps).round();
        (k.max(0.0) as usize).min(self.len() - 1)
    }

    /// Indices of the first and last cells with positive probability.
    pub fn support(&self) -> Option<(usize, usize)> {
        let first = self.weights.iter().position(|w| *w > 0.0)?;
        let last = self.weights.iter().rposition(|w| *w > 0.0)?;
        Some((first, last))
    }

    /// Weighted sum `sum_k gamma_k * g(u_k)` over cells with positive weight.
    pub fn expectation<F>(&self, mut g: F) -> Result<f64>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let mut total = 0.0;
        for (&u, &w) in self.points.iter().zip(&self.weights) {
            if w > 0.0 {
                total += w * g(u)?;
            }
        }
        Ok(total)
    }
}

/// Number of utility cells `ceil(2B / eps)`, at least one.
pub fn grid_size(b: f64, eps: f64) -> usize {
    let raw = 2.0 * b / eps;
    // guard against 2/0.01 = 200.00000000000003
    let n = (raw * (1.0 - 1e-12)).ceil();
    (n.max(1.0)) as usize
}

/// Discretizes `dist` onto `ceil(2B/eps)` cells of width `eps` centred on
/// `[-B, B]`. Probability outside the outermost cells is folded into them.
pub fn discretize(dist: &UtilityDistribution, b: f64, eps: f64) -> Result<UtilityGrid> {
    if !(eps > 0.0 && b > 0.0 && eps.is_finite() && b.is_finite()) {
        return Err(Error::invalid(format!(
            "discretize needs eps > 0 and B > 0, got eps={eps}, B={b}"
        )));
    }
    let m = grid_size(b, eps);
    let start = -(m as f64) * eps / 2.0 + eps / 2.0;
    let points: Vec<f64> = (0..m).map(|k| start + eps * k as f64).collect();
    let mut weights = Vec::with_capacity(m);
    let mut prev = 0.0;
    for k in 0..m {
        let upper = if k + 1 == m {
            1.0
        } else {
            dist.cdf(points[k] + eps / 2.0)
        };
        weights.push((upper - prev).max(0.0));
        prev = upper;
    }
    Ok(UtilityGrid {
        points,
        weights,
        eps,
    })
}

/// Generates context vectors with independent coordinates; the implied
/// utility is `x^T theta0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextGenerator {
    pub theta0: Vec<f64>,
    pub coordinates: Vec<UtilityDistribution>,
}

impl ContextGenerator {
    pub fn new(theta0: Vec<f64>, coordinates: Vec<UtilityDistribution>) -> Result<Self> {
        if theta0.is_empty() || theta0.len() != coordinates.len() {
            return Err(Error::invalid(format!(
                "context generator needs one coordinate per theta0 entry (got {} and {})",
                theta0.len(),
                coordinates.len()
            )));
        }
        Ok(ContextGenerator {
            theta0,
            coordinates,
        })
    }

    /// Identically distributed coordinates.
    pub fn iid(theta0: Vec<f64>, coordinate: UtilityDistribution) -> Result<Self> {
        let coords = vec![coordinate; theta0.len()];
        Self::new(theta0, coords)
    }

    pub fn dim(&self) -> usize {
        self.theta0.len()
    }

    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.coordinates.iter().map(|c| c.sample(rng)).collect()
    }

    /// Smallest coordinate variance; with independent coordinates this is the
    /// smallest eigenvalue of the context covariance.
    pub fn declared_sigma_x(&self) -> f64 {
        self.coordinates
            .iter()
            .map(|c| c.moments().variance())
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest eigenvalue of the empirical covariance of `n` draws.
    pub fn empirical_min_eigenvalue<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> f64 {
        let d = self.dim();
        let xs: Vec<Vec<f64>> = (0..n).map(|_| self.sample_context(rng)).collect();
        let mean: Vec<f64> = (0..d)
            .map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n as f64)
            .collect();
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for x in &xs {
            for i in 0..d {
                for j in 0..d {
                    cov[(i, j)] += (x[i] - mean[i]) * (x[j] - mean[j]);
                }
            }
        }
        cov /= n as f64;
        SymmetricEigen::new(cov).eigenvalues.min()
    }

    /// Empirical utility distribution of `n` generated contexts, clipped to
    /// `[-clip, clip]`.
    pub fn implied_utility(&self, n: usize, seed: u64, clip: f64) -> Result<UtilityDistribution> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..n)
            .map(|_| crate::demand::dot(&self.sample_context(&mut rng), &self.theta0))
            .collect();
        UtilityDistribution::empirical(samples, clip)
    }

    /// Bound on `|x^T theta0|` over the coordinate supports.
    pub fn utility_bound(&self) -> f64 {
        self.theta0
            .iter()
            .zip(&self.coordinates)
            .map(|(t, c)| t.abs() * c.clip())
            .sum()
    }
}

/// Samples one context vector from `gen`.
pub fn sample_context<R: Rng + ?Sized>(gen: &ContextGenerator, rng: &mut R) -> Vec<f64> {
    gen.sample_context(rng)
}

// --- JSON representation -------------------------------------------------

/// Wire form of a [`UtilityDistribution`], e.g.
/// `{"kind":"normal","mu":1.0,"sigma":1.0,"B":4.0}`. Uniform distributions may
/// be given by `low`/`high` instead of `mu`/`sigma`; empirical ones by
/// `samples`. `B` defaults to a bound covering the support (or `|mu| + 8 sigma`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub kind: DistributionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
}

impl DistributionSpec {
    pub fn build(&self) -> Result<UtilityDistribution> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::invalid(format!("{:?} distribution needs `{name}`", self.kind)))
        };
        match self.kind {
            DistributionKind::Empirical => {
                let samples = self
                    .samples
                    .clone()
                    .ok_or_else(|| Error::invalid("empirical distribution needs `samples`"))?;
                let b = match self.b {
                    Some(b) => b,
                    None => samples
                        .iter()
                        .fold(0.0f64, |m, s| m.max(s.abs()))
                        .max(1e-12),
                };
                UtilityDistribution::empirical(samples, b)
            }
            DistributionKind::Uniform if self.low.is_some() || self.high.is_some() => {
                let (lo, hi) = (need(self.low, "low")?, need(self.high, "high")?);
                let b = self.b.unwrap_or_else(|| lo.abs().max(hi.abs()));
                UtilityDistribution::uniform(lo, hi, b)
            }
            kind => {
                let mu = need(self.mu, "mu")?;
                let sigma = if kind == DistributionKind::PointMass {
                    0.0
                } else {
                    need(self.sigma, "sigma")?
                };
                let b = self
                    .b
                    .unwrap_or_else(|| match kind {
                        DistributionKind::Uniform => mu.abs() + SQRT_3 * sigma,
                        _ => mu.abs() + 8.0 * sigma,
                    })
                    .max(1e-12);
                UtilityDistribution::new(kind, mu, sigma, b)
            }
        }
    }
}

impl From<&UtilityDistribution> for DistributionSpec {
    fn from(d: &UtilityDistribution) -> Self {
        DistributionSpec {
            kind: d.kind,
            mu: (d.kind != DistributionKind::Empirical).then_some(d.location),
            sigma: (d.kind != DistributionKind::Empirical && d.kind != DistributionKind::PointMass)
                .then_some(d.scale),
            b: Some(d.clip),
            low: None,
            high: None,
            samples: d.samples().map(<[f64]>::to_vec),
        }
    }
}

impl Serialize for UtilityDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DistributionSpec::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for UtilityDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        DistributionSpec::deserialize(d)?
            .build()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum CoordinateSpec {
    Each(Vec<UtilityDistribution>),
    Iid(UtilityDistribution),
}

/// Wire form of a [`ContextGenerator`]:
/// `{"theta0":[...],"coordinates":[{...},...]}` or a single shared
/// coordinate spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSpec {
    pub theta0: Vec<f64>,
    coordinates: CoordinateSpec,
}

impl ContextSpec {
    pub fn build(&self) -> Result<ContextGenerator> {
        match &self.coordinates {
            CoordinateSpec::Each(c) => ContextGenerator::new(self.theta0.clone(), c.clone()),
            CoordinateSpec::Iid(c) => ContextGenerator::iid(self.theta0.clone(), c.clone()),
        }
    }
}

impl From<&ContextGenerator> for ContextSpec {
    fn from(g: &ContextGenerator) -> Self {
        ContextSpec {
            theta0: g.theta0.clone(),
            coordinates: CoordinateSpec::Each(g.coordinates.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn reference_moments() {
        let u = UtilityDistribution::uniform(0.0, 2.0, 2.0)
            .unwrap()
            .moments();
        assert!((u.mu - 1.0).abs() < 1e-12 && (u.nu_sq - 4.0 / 3.0).abs() < 1e-12);
        let p = UtilityDistribution::point_mass(0.3, 1.0).unwrap().moments();
        assert_eq!((p.mu, p.nu_sq), (0.3, 0.3 * 0.3));
        let n = UtilityDistribution::new(DistributionKind::Normal, 1.0, 1.0, 40.0)
            .unwrap()
            .moments();
        assert!((n.mu - 1.0).abs() < 1e-12 && (n.nu_sq - 2.0).abs() < 1e-12);
    }

    #[test]
    fn clipped_uniform_moments_include_edge_mass() {
        // Uniform[0, 2] clamped to [-1, 1]: half the mass sits at 1.
        let m = UtilityDistribution::uniform(0.0, 2.0, 1.0)
            .unwrap()
            .moments();
        assert!((m.mu - 0.75).abs() < 1e-12);
        assert!((m.nu_sq - (1.0 / 6.0 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn heavy_tails_hit_target_moments_after_clipping() {
        for kind in [DistributionKind::Laplace, DistributionKind::StudentT3] {
            let d = UtilityDistribution::new(kind, 0.5, 1.0, 3.0).unwrap();
            let m = d.moments();
            assert!((m.mu - 0.5).abs() < 0.005, "{kind:?} mean {}", m.mu);
            assert!((m.variance().sqrt() - 1.0).abs() < 0.01, "{kind:?}");
        }
    }

    #[test]
    fn analytic_and_sampled_moments_agree() {
        let kinds = [
            DistributionKind::Uniform,
            DistributionKind::Normal,
            DistributionKind::Laplace,
            DistributionKind::StudentT3,
        ];
        for kind in kinds {
            let d = UtilityDistribution::new(kind, 0.2, 0.8, 2.5).unwrap();
            let exact = d.moments();
            let (mc, se) = d.moments_monte_carlo(200_000, 11);
            assert!((mc.mu - exact.mu).abs() <= 4.0 * se.mu, "{kind:?} mean");
            assert!(
                (mc.nu_sq - exact.nu_sq).abs() <= 4.0 * se.nu_sq,
                "{kind:?} nu"
            );
        }
    }

    #[test]
    fn grid_sizes_and_uniform_weights() {
        let d = UtilityDistribution::new(DistributionKind::Normal, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(discretize(&d, 1.0, 0.5).unwrap().len(), 4);
        assert_eq!(grid_size(1.0, 0.01), 200);
        assert_eq!(discretize(&d, 1.0, 5.0).unwrap().len(), 1);

        let u = UtilityDistribution::uniform(-1.5, 1.5, 1.5).unwrap();
        let g = discretize(&u, 1.5, 0.1).unwrap();
        assert_eq!(g.len(), 30);
        for w in &g.weights {
            assert!((w - 1.0 / 30.0).abs() < 1e-9);
        }
        assert!((g.points[1] - g.points[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn point_mass_lands_in_one_cell() {
        let d = UtilityDistribution::point_mass(0.0, 1.0).unwrap();
        let g = discretize(&d, 1.0, 0.3).unwrap();
        let k = g.nearest(0.0);
        for (i, w) in g.weights.iter().enumerate() {
            assert_eq!(*w, if i == k { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn weights_sum_to_one_with_folded_tails() {
        let d = UtilityDistribution::new(DistributionKind::Normal, 0.5, 2.0, 6.0).unwrap();
        let g = discretize(&d, 2.0, 0.07).unwrap();
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(g.weights[0] > 0.1 && *g.weights.last().unwrap() > 0.1);
    }

    #[test]
    fn sampling_is_clipped_and_deterministic() {
        let p = UtilityDistribution::point_mass(0.7, 1.0).unwrap();
        assert_eq!(p.sample(&mut rng(1)), 0.7);

        let u = UtilityDistribution::uniform(-1.0, 1.0, 1.0).unwrap();
        let mut r = rng(3);
        let mean = (0..100_000).map(|_| u.sample(&mut r)).sum::<f64>() / 1e5;
        assert!(mean.abs() < 0.02);

        let t = UtilityDistribution::new(DistributionKind::StudentT3, 0.0, 1.0, 2.0).unwrap();
        let mut r = rng(9);
        let a: Vec<f64> = (0..100).map(|_| t.sample(&mut r)).collect();
        let mut r = rng(9);
        let b: Vec<f64> = (0..100).map(|_| sample_utility(&t, &mut r)).collect();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.abs() <= 2.0));
    }

    #[test]
    fn context_generators() {
        let g = ContextGenerator::iid(
            vec![1.0],
            UtilityDistribution::uniform(0.25, 0.75, 1.0).unwrap(),
        )
        .unwrap();
        let mut r = rng(5);
        for _ in 0..1000 {
            let x = g.sample_context(&mut r);
            let u = crate::demand::dot(&x, &g.theta0);
            assert!((0.25..=0.75).contains(&u));
        }

        let z = ContextGenerator::iid(
            vec![0.0; 2],
            UtilityDistribution::uniform(0.0, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        let x = z.sample_context(&mut r);
        assert_eq!(crate::demand::dot(&x, &z.theta0), 0.0);

        let g3 = ContextGenerator::iid(
            vec![1.0; 3],
            UtilityDistribution::uniform(0.0, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        assert!((g3.declared_sigma_x() - 1.0 / 12.0).abs() < 1e-12);
        assert!(g3.empirical_min_eigenvalue(10_000, &mut r) >= 1.0 / 24.0);
    }

    #[test]
    fn json_specs() {
        let d: UtilityDistribution =
            serde_json::from_str(r#"{"kind":"normal","mu":1.0,"sigma":1.0,"B":4.0}"#).unwrap();
        assert_eq!(d.kind(), DistributionKind::Normal);
        assert_eq!(d.clip(), 4.0);
        let u: UtilityDistribution =
            serde_json::from_str(r#"{"kind":"uniform","low":0.0,"high":2.0}"#).unwrap();
        assert!((u.moments().mu - 1.0).abs() < 1e-12);
        let back: UtilityDistribution =
            serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);

        let c: ContextSpec = serde_json::from_str(
            r#"{"theta0":[0.5,0.5],"coordinates":{"kind":"uniform","low":0.0,"high":1.0}}"#,
        )
        .unwrap();
        assert_eq!(c.build().unwrap().dim(), 2);
        assert!(
            serde_json::from_str::<UtilityDistribution>(r#"{"kind":"normal","mu":1.0}"#).is_err()
        );
    }
}
