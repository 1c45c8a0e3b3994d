//! Zero-mean exogenous noise families.
//!
//! Every [`NoiseSpec`] describes a centered distribution: families with a
//! nonzero natural mean (exponential, gamma, gumbel) are shifted so that
//! `E[eps] = 0`. Central moments come from closed forms; an independent
//! quadrature path is kept for cross-checking.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Gumbel, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature;

/// Highest moment order any family can report.
pub const MAX_NOISE_ORDER: usize = 16;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_606_512_090_082_402_4;

// B_2, B_4, ..., B_16
const BERNOULLI_EVEN: [f64; 8] =
    [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0, 7.0 / 6.0, -3617.0 / 510.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("moment order {order} exceeds the supported maximum {max}")]
    UnsupportedOrder { order: usize, max: usize },
    #[error("quadrature did not converge on [{a}, {b}]")]
    QuadratureNonConvergence { a: f64, b: f64 },
    #[error("invalid parameters for {family}: {reason}")]
    InvalidParams { family: String, reason: String },
    #[error("unknown noise family '{0}'")]
    UnknownFamily(String),
}

/// Base distribution before centering and scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// Rate parameterization: mean `1/rate` before centering.
    Exponential {
        rate: f64,
    },
    Gamma {
        shape: f64,
        scale: f64,
    },
    Gumbel {
        scale: f64,
    },
    Logistic {
        scale: f64,
    },
    Uniform {
        halfwidth: f64,
    },
    PointMass,
    /// Negative control only: all cumulants past the variance vanish.
    Gaussian {
        sd: f64,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Exponential { .. } => "exponential",
            Family::Gamma { .. } => "gamma",
            Family::Gumbel { .. } => "gumbel",
            Family::Logistic { .. } => "logistic",
            Family::Uniform { .. } => "uniform",
            Family::PointMass => "point_mass",
            Family::Gaussian { .. } => "gaussian",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Family::Exponential { rate } => vec![rate],
            Family::Gamma { shape, scale } => vec![shape, scale],
            Family::Gumbel { scale } => vec![scale],
            Family::Logistic { scale } => vec![scale],
            Family::Uniform { halfwidth } => vec![halfwidth],
            Family::PointMass => vec![],
            Family::Gaussian { sd } => vec![sd],
        }
    }

    /// Builds a family from its configuration name and parameter list.
    pub fn from_name(name: &str, params: &[f64]) -> Result<Self, NoiseError> {
        let want = |k: usize| -> Result<(), NoiseError> {
            if params.len() == k {
                Ok(())
            } else {
                Err(NoiseError::InvalidParams {
                    family: name.to_string(),
                    reason: format!("expected {k} parameter(s), got {}", params.len()),
                })
            }
        };
        let family = match name {
            "exponential" => {
                want(1)?;
                Family::Exponential { rate: params[0] }
            }
            "gamma" => {
                want(2)?;
                Family::Gamma { shape: params[0], scale: params[1] }
            }
            "gumbel" => {
                want(1)?;
                Family::Gumbel { scale: params[0] }
            }
            "logistic" => {
                want(1)?;
                Family::Logistic { scale: params[0] }
            }
            "uniform" => {
                want(1)?;
                Family::Uniform { halfwidth: params[0] }
            }
            "point_mass" => {
                want(0)?;
                Family::PointMass
            }
            "gaussian" => {
                want(1)?;
                Family::Gaussian { sd: params[0] }
            }
            other => return Err(NoiseError::UnknownFamily(other.to_string())),
        };
        family.validate()?;
        Ok(family)
    }

    fn validate(&self) -> Result<(), NoiseError> {
        let bad = self.params().iter().any(|p| !(p.is_finite() && *p > 0.0));
        if bad {
            return Err(NoiseError::InvalidParams {
                family: self.name().to_string(),
                reason: "parameters must be positive and finite".to_string(),
            });
        }
        Ok(())
    }

    /// Natural mean subtracted to center the family.
    fn natural_mean(&self) -> f64 {
        match *self {
            Family::Exponential { rate } => 1.0 / rate,
            Family::Gamma { shape, scale } => shape * scale,
            Family::Gumbel { scale } => scale * EULER_GAMMA,
            _ => 0.0,
        }
    }

    /// Central moments `E[(X - EX)^j]` for `j = 0..=order`.
    fn central_moments(&self, order: usize) -> Vec<f64> {
        match *self {
            Family::Exponential { rate } => from_cumulants(order, |n| factorial(n - 1) / rate.powi(n as i32)),
            Family::Gamma { shape, scale } => {
                from_cumulants(order, |n| shape * scale.powi(n as i32) * factorial(n - 1))
            }
            Family::Gumbel { scale } => {
                from_cumulants(order, |n| scale.powi(n as i32) * factorial(n - 1) * zeta(n as f64))
            }
            Family::Gaussian { sd } => from_cumulants(order, |n| if n == 2 { sd * sd } else { 0.0 }),
            Family::Logistic { scale } => (0..=order)
                .map(|j| match j {
                    0 => 1.0,
                    j if j % 2 == 1 => 0.0,
                    j => {
                        let b = BERNOULLI_EVEN[j / 2 - 1].abs();
                        (scale * PI).powi(j as i32) * (2f64.powi(j as i32) - 2.0) * b
                    }
                })
                .collect(),
            Family::Uniform { halfwidth } => (0..=order)
                .map(|j| if j % 2 == 1 { 0.0 } else { halfwidth.powi(j as i32) / (j as f64 + 1.0) })
                .collect(),
            Family::PointMass => (0..=order).map(|j| if j == 0 { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Central moments from cumulants (`kappa_1 = 0`) through
/// `m_n = sum_{j=2}^{n} C(n-1, j-1) kappa_j m_{n-j}`.
fn from_cumulants(order: usize, cumulant: impl Fn(usize) -> f64) -> Vec<f64> {
    let kappa: Vec<f64> = (0..=order).map(|n| if n < 2 { 0.0 } else { cumulant(n) }).collect();
    let mut m = vec![0.0; order + 1];
    m[0] = 1.0;
    for n in 1..=order {
        m[n] = (2..=n).map(|j| binomial(n - 1, j - 1) * kappa[j] * m[n - j]).sum();
    }
    m
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

/// Riemann zeta for real `s > 1` by Euler–Maclaurin summation.
fn zeta(s: f64) -> f64 {
    const N: usize = 16;
    let n = N as f64;
    let mut sum: f64 = (1..N).map(|k| (k as f64).powf(-s)).sum();
    sum += n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    let mut rising = s; // s (s+1) ... (s+2j-2)
    let mut fact = 2.0; // (2j)!
    for (j, b) in BERNOULLI_EVEN.iter().enumerate().take(6) {
        let j = j + 1;
        sum += b / fact * rising * n.powf(-s - 2.0 * j as f64 + 1.0);
        rising *= (s + 2.0 * j as f64 - 1.0) * (s + 2.0 * j as f64);
        fact *= (2.0 * j as f64 + 1.0) * (2.0 * j as f64 + 2.0);
    }
    sum
}

/// A centered noise distribution, optionally multiplied by a constant.
///
/// The multiplier carries rescalings such as `alpha * eps_u` without
/// inventing a new family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseToml", into = "NoiseToml")]
pub struct NoiseSpec {
    family: Family,
    multiplier: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseToml {
    family: String,
    #[serde(default)]
    params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    multiplier: Option<f64>,
}

impl TryFrom<NoiseToml> for NoiseSpec {
    type Error = NoiseError;

    fn try_from(raw: NoiseToml) -> Result<Self, Self::Error> {
        let family = Family::from_name(&raw.family, &raw.params)?;
        let multiplier = raw.multiplier.unwrap_or(1.0);
        if !multiplier.is_finite() {
            return Err(NoiseError::InvalidParams {
                family: raw.family,
                reason: "multiplier must be finite".to_string(),
            });
        }
        Ok(NoiseSpec { family, multiplier })
    }
}

impl From<NoiseSpec> for NoiseToml {
    fn from(spec: NoiseSpec) -> Self {
        NoiseToml {
            family: spec.family.name().to_string(),
            params: spec.family.params(),
            multiplier: (spec.multiplier != 1.0).then_some(spec.multiplier),
        }
    }
}

impl NoiseSpec {
    pub fn new(family: Family) -> Result<Self, NoiseError> {
        family.validate()?;
        Ok(NoiseSpec { family, multiplier: 1.0 })
    }

    fn known(family: Family) -> Self {
        Self::new(family).unwrap_or_else(|e| panic!("{e}"))
    }

    /// Centered exponential with the given rate. Panics on a non-positive rate.
    pub fn exponential(rate: f64) -> Self {
        Self::known(Family::Exponential { rate })
    }

    pub fn gamma(shape: f64, scale: f64) -> Self {
        Self::known(Family::Gamma { shape, scale })
    }

    pub fn gumbel(scale: f64) -> Self {
        Self::known(Family::Gumbel { scale })
    }

    pub fn logistic(scale: f64) -> Self {
        Self::known(Family::Logistic { scale })
    }

    pub fn uniform(halfwidth: f64) -> Self {
        Self::known(Family::Uniform { halfwidth })
    }

    pub fn point_mass() -> Self {
        NoiseSpec { family: Family::PointMass, multiplier: 1.0 }
    }

    pub fn gaussian(sd: f64) -> Self {
        Self::known(Family::Gaussian { sd })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    /// The same distribution multiplied by `c`.
    pub fn scaled(self, c: f64) -> Self {
        NoiseSpec { multiplier: self.multiplier * c, ..self }
    }

    /// `E[eps^order]` of the centered, scaled distribution.
    pub fn raw_moment(&self, order: usize) -> Result<f64, NoiseError> {
        Ok(self.raw_moments(order)?[order])
    }

    /// `E[eps^j]` for every `j` in `0..=order`.
    pub fn raw_moments(&self, order: usize) -> Result<Vec<f64>, NoiseError> {
        if order > MAX_NOISE_ORDER {
            return Err(NoiseError::UnsupportedOrder { order, max: MAX_NOISE_ORDER });
        }
        let mut m = self.family.central_moments(order);
        let mut c = 1.0;
        for v in m.iter_mut() {
            *v *= c;
            c *= self.multiplier;
        }
        Ok(m)
    }

    /// `E[eps^order]` by adaptive quadrature against the density.
    ///
    /// Independent of the closed forms behind [`NoiseSpec::raw_moment`].
    pub fn raw_moment_quadrature(&self, order: usize) -> Result<f64, NoiseError> {
        if order > MAX_NOISE_ORDER {
            return Err(NoiseError::UnsupportedOrder { order, max: MAX_NOISE_ORDER });
        }
        let k = order as i32;
        let tail = 60.0 + 4.0 * order as f64;
        let shift = self.family.natural_mean();
        let integral = match self.family {
            Family::PointMass => return Ok(if order == 0 { 1.0 } else { 0.0 }),
            Family::Exponential { rate } => {
                quadrature::integrate(|x| (x - shift).powi(k) * rate * (-rate * x).exp(), 0.0, tail / rate, 1e-13)
            }
            Family::Gamma { shape, scale } => {
                let log_norm = statrs::function::gamma::ln_gamma(shape) + shape * scale.ln();
                let upper = scale * (tail + 2.0 * shape);
                let density = move |x: f64| {
                    if x <= 0.0 {
                        0.0
                    } else {
                        ((shape - 1.0) * x.ln() - x / scale - log_norm).exp()
                    }
                };
                // Split at the mode region so the x^(shape-1) corner gets its own panels.
                let split = scale * shape.max(1.0);
                quadrature::integrate(|x| (x - shift).powi(k) * density(x), 0.0, split, 1e-13).and_then(|lo| {
                    quadrature::integrate(|x| (x - shift).powi(k) * density(x), split, upper, 1e-13).map(|hi| lo + hi)
                })
            }
            Family::Gumbel { scale } => quadrature::integrate(
                |x| {
                    let z = x / scale;
                    (x - shift).powi(k) * (-(z + (-z).exp())).exp() / scale
                },
                -6.0 * scale,
                tail * scale,
                1e-13,
            ),
            Family::Logistic { scale } => quadrature::integrate(
                |x| {
                    let e = (-(x / scale).abs()).exp();
                    x.powi(k) * e / (scale * (1.0 + e) * (1.0 + e))
                },
                -tail * scale,
                tail * scale,
                1e-13,
            ),
            Family::Uniform { halfwidth } => {
                quadrature::integrate(|x| x.powi(k) / (2.0 * halfwidth), -halfwidth, halfwidth, 1e-14)
            }
            Family::Gaussian { sd } => quadrature::integrate(
                |x| x.powi(k) * (-0.5 * (x / sd).powi(2)).exp() / (sd * (2.0 * PI).sqrt()),
                -(12.0 + order as f64) * sd,
                (12.0 + order as f64) * sd,
                1e-13,
            ),
        };
        integral
            .map(|v| v * self.multiplier.powi(k))
            .map_err(|f| NoiseError::QuadratureNonConvergence { a: f.a, b: f.b })
    }

    /// Draws one centered value.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let base = match self.family {
            Family::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
            Family::Gamma { shape, scale } => Gamma::new(shape, scale).expect("validated gamma").sample(rng),
            Family::Gumbel { scale } => Gumbel::new(0.0, scale).expect("validated gumbel").sample(rng),
            Family::Logistic { scale } => {
                let u: f64 = loop {
                    let u: f64 = rng.random();
                    if u > 0.0 {
                        break u;
                    }
                };
                scale * (u / (1.0 - u)).ln()
            }
            Family::Uniform { halfwidth } => halfwidth * (2.0 * rng.random::<f64>() - 1.0),
            Family::PointMass => 0.0,
            Family::Gaussian { sd } => Normal::new(0.0, sd).expect("validated sd").sample(rng),
        };
        self.multiplier * (base - self.family.natural_mean())
    }

    /// Fills `out` with i.i.d. draws from `rng`.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.draw(rng);
        }
    }

    /// `n` i.i.d. centered draws, bit-identical for identical `(self, n, seed)`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        let mut out = vec![0.0; n];
        self.fill(&mut rng, &mut out);
        out
    }
}

/// ChaCha8 generator for an independent `stream` under a master `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64-style mixing of a master seed with a tag path.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    tags.iter().fold(mix(seed), |acc, &t| mix(acc ^ mix(t)))
}

/// Smallest `n` in `3..=max_order` with `E[eps^n] != (n-1) E[eps^(n-2)] E[eps^2]`,
/// i.e. the first order where the noise stops looking Gaussian.
pub fn nongaussian_order(spec: &NoiseSpec, max_order: usize) -> Option<usize> {
    let m = spec.raw_moments(max_order.min(MAX_NOISE_ORDER)).ok()?;
    (3..m.len()).find(|&n| {
        let lhs = m[n];
        let rhs = (n as f64 - 1.0) * m[n - 2] * m[2];
        (lhs - rhs).abs() > 1e-9 * lhs.abs().max(rhs.abs())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_families() -> Vec<NoiseSpec> {
        vec![
            NoiseSpec::exponential(1.0),
            NoiseSpec::exponential(0.5),
            NoiseSpec::gamma(2.0, 1.3),
            NoiseSpec::gamma(0.7, 1.0),
            NoiseSpec::gumbel(1.0),
            NoiseSpec::gumbel(0.6),
            NoiseSpec::logistic(1.0),
            NoiseSpec::logistic(0.4),
            NoiseSpec::uniform(1.5),
            NoiseSpec::gaussian(1.2),
            NoiseSpec::exponential(1.0).scaled(-0.7),
        ]
    }

    #[test]
    fn centered() {
        for spec in all_families() {
            assert_eq!(spec.raw_moment(1).unwrap(), 0.0, "{spec:?}");
            assert!(spec.raw_moment(2).unwrap() > 0.0);
        }
        assert_eq!(NoiseSpec::point_mass().raw_moment(2).unwrap(), 0.0);
    }

    #[test]
    fn exponential_closed_forms() {
        // central moments of Exp(1) are the subfactorials 1, 0, 1, 2, 9, 44, 265
        let m = NoiseSpec::exponential(1.0).raw_moments(6).unwrap();
        let expected = [1.0, 0.0, 1.0, 2.0, 9.0, 44.0, 265.0];
        for (a, b) in m.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{m:?}");
        }
        let third = NoiseSpec::exponential(0.5).raw_moment(3).unwrap();
        assert!((third - 2.0 / 0.125).abs() < 1e-12);
    }

    #[test]
    fn logistic_and_gumbel_known_values() {
        let l = NoiseSpec::logistic(1.0);
        assert_eq!(l.raw_moment(3).unwrap(), 0.0);
        let var = PI * PI / 3.0;
        assert!((l.raw_moment(2).unwrap() - var).abs() < 1e-12);
        assert!((l.raw_moment(4).unwrap() / (var * var) - 4.2).abs() < 1e-12);
        // Gumbel skewness 12 sqrt(6) zeta(3) / pi^3
        let g = NoiseSpec::gumbel(1.0);
        let skew = g.raw_moment(3).unwrap() / g.raw_moment(2).unwrap().powf(1.5);
        assert!((skew - 1.139_547_099_404_648_7).abs() < 1e-12, "{skew}");
    }

    #[test]
    fn zeta_values() {
        assert!((zeta(2.0) - PI * PI / 6.0).abs() < 1e-15);
        assert!((zeta(3.0) - 1.202_056_903_159_594_2).abs() < 1e-15);
        assert!((zeta(4.0) - PI.powi(4) / 90.0).abs() < 1e-15);
    }

    #[test]
    fn closed_forms_agree_with_quadrature() {
        for spec in all_families() {
            for order in 0..=12 {
                let closed = spec.raw_moment(order).unwrap();
                let quad = spec.raw_moment_quadrature(order).unwrap();
                // symmetric families have zero odd moments: compare against E|eps|^order
                let scale = spec.raw_moment(order + order % 2).unwrap().abs().max(1e-300);
                assert!(
                    (closed - quad).abs() <= 1e-10 * scale.max(closed.abs()),
                    "{spec:?} order {order}: closed {closed} quad {quad}"
                );
            }
        }
    }

    #[test]
    fn order_limit() {
        assert!(matches!(
            NoiseSpec::exponential(1.0).raw_moment(MAX_NOISE_ORDER + 1),
            Err(NoiseError::UnsupportedOrder { .. })
        ));
    }

    #[test]
    fn nongaussian_orders() {
        assert_eq!(nongaussian_order(&NoiseSpec::exponential(1.0), 8), Some(3));
        assert_eq!(nongaussian_order(&NoiseSpec::gamma(2.0, 1.0), 8), Some(3));
        assert_eq!(nongaussian_order(&NoiseSpec::gumbel(1.0), 8), Some(3));
        assert_eq!(nongaussian_order(&NoiseSpec::logistic(1.0), 8), Some(4));
        assert_eq!(nongaussian_order(&NoiseSpec::uniform(1.0), 8), Some(4));
        assert_eq!(nongaussian_order(&NoiseSpec::gaussian(2.0), 12), None);
        assert_eq!(nongaussian_order(&NoiseSpec::point_mass(), 12), None);
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = NoiseSpec::gamma(2.0, 1.0);
        assert_eq!(spec.sample(100, 7), spec.sample(100, 7));
        assert_ne!(spec.sample(100, 7), spec.sample(100, 8));
        assert_eq!(NoiseSpec::point_mass().sample(5, 1), vec![0.0; 5]);
    }

    #[test]
    fn exponential_sample_mean() {
        let xs = NoiseSpec::exponential(1.0).sample(1_000_000, 3);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.005, "{mean}");
    }

    #[test]
    fn toml_roundtrip() {
        let spec = NoiseSpec::gamma(2.0, 0.5).scaled(3.0);
        let text = toml::to_string(&spec).unwrap();
        assert!(text.contains("family = \"gamma\""));
        let back: NoiseSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let bad: Result<NoiseSpec, _> = toml::from_str("family = \"pareto\"\nparams = [1.0]");
        assert!(bad.is_err());
        let bad: Result<NoiseSpec, _> = toml::from_str("family = \"exponential\"\nparams = [-1.0]");
        assert!(bad.is_err());
    }
}
