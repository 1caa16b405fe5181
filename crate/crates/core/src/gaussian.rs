//! Gaussian positional weighting.
//!
//! Tokens near a target entity matter more than distant ones. Each token at
//! signed distance `x` from the target gets the probability mass a normal
//! distribution assigns to the window `[x - w, x]`, and the sequence is
//! pooled as the weighted sum of hidden states under those weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ops, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussianConfig {
    pub mu: f64,
    pub sigma: f64,
    /// Token window width; a whole number of tokens, at least one.
    pub window: f64,
    /// Rescale the weights to sum to one before pooling. Off by default:
    /// the raw window probabilities already live on a bounded scale, and
    /// keeping them unnormalised preserves the contrast between tokens
    /// packed near the target and tokens spread far from it.
    pub renormalize: bool,
}

impl Default for GaussianConfig {
    fn default() -> Self {
        GaussianConfig {
            mu: 0.0,
            sigma: 3.0,
            window: 1.0,
            renormalize: false,
        }
    }
}

impl GaussianConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gaussian mu must be finite, got {}",
                self.mu
            )));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gaussian sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        if !(self.window >= 1.0) || !self.window.is_finite() || self.window.fract() != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "gaussian window must be a whole number of tokens >= 1, got {}",
                self.window
            )));
        }
        Ok(())
    }
}

/// erf by rational approximation (Abramowitz & Stegun 7.1.26), absolute
/// error below 1.5e-7 everywhere.
fn erf(x: f64) -> f64 {
    const P: f64 = 0.3275911;
    const A1: f64 = 0.254829592;
    const A2: f64 = -0.284496736;
    const A3: f64 = 1.421413741;
    const A4: f64 = -1.453152027;
    const A5: f64 = 1.061405429;
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + P * x);
    let poly = ((((A5 * t + A4) * t + A3) * t + A2) * t + A1) * t;
    sign * (1.0 - poly * (-x * x).exp())
}

fn check_point(x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "evaluation point must be finite, got {x}"
        )));
    }
    Ok(())
}

fn check_params(mu: f64, sigma: f64) -> Result<()> {
    GaussianConfig {
        mu,
        sigma,
        ..Default::default()
    }
    .validate()
}

/// Normal density at `x`.
pub fn pdf(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_point(x)?;
    check_params(mu, sigma)?;
    let z = (x - mu) / sigma;
    Ok((-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt()))
}

/// Normal cumulative distribution at `x`.
pub fn cdf(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_point(x)?;
    check_params(mu, sigma)?;
    let z = (x - mu) / (sigma * std::f64::consts::SQRT_2);
    Ok(0.5 * (1.0 + erf(z)))
}

/// Probability mass the distribution assigns to `[x - w, x]`. The clamp
/// guards against the erf approximation dipping a hair below zero deep in
/// the tails, where the true mass is smaller than the approximation error.
pub fn window_prob(x: f64, mu: f64, sigma: f64, w: f64) -> Result<f64> {
    check_point(x)?;
    check_params(mu, sigma)?;
    if !(w > 0.0) || !w.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "window width must be positive and finite, got {w}"
        )));
    }
    Ok((cdf(x, mu, sigma)? - cdf(x - w, mu, sigma)?).max(0.0))
}

/// Window probability per token given signed distances from the target.
pub fn positional_weights(distances: &[i64], cfg: &GaussianConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut weights = Vec::with_capacity(distances.len());
    for &d in distances {
        weights.push(window_prob(d as f64, cfg.mu, cfg.sigma, cfg.window)?);
    }
    if cfg.renormalize {
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidArgument(
                "positional weights sum to zero, cannot renormalize".into(),
            ));
        }
        for w in &mut weights {
            *w /= sum;
        }
    }
    Ok(weights)
}

/// Signed token distances to two target spans (inclusive index pairs).
/// Zero on the span itself, negative to its left, positive to its right,
/// measured to the nearest token of the span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceLists {
    pub x1: Vec<i64>,
    pub x2: Vec<i64>,
}

fn span_distances(len: usize, span: (usize, usize)) -> Result<Vec<i64>> {
    let (first, last) = span;
    if first > last || last >= len {
        return Err(Error::InvalidArgument(format!(
            "target span ({first}, {last}) invalid for {len} tokens"
        )));
    }
    Ok((0..len)
        .map(|i| {
            if i < first {
                i as i64 - first as i64
            } else if i > last {
                i as i64 - last as i64
            } else {
                0
            }
        })
        .collect())
}

/// Distance lists for both target spans of an instance with `len` tokens.
pub fn relative_distances(
    len: usize,
    target1: (usize, usize),
    target2: (usize, usize),
) -> Result<DistanceLists> {
    Ok(DistanceLists {
        x1: span_distances(len, target1)?,
        x2: span_distances(len, target2)?,
    })
}

/// Target-centred pooling: the weighted sum of hidden rows, weights taken
/// from [`positional_weights`]. `hidden` is `[n, d]`, the result `[1, d]`.
pub fn target_aware_pool(
    hidden: &Tensor,
    distances: &[i64],
    cfg: &GaussianConfig,
) -> Result<Tensor> {
    let shape = hidden.shape();
    if shape.len() != 2 || shape[0] != distances.len() {
        return Err(Error::ShapeMismatch {
            op: "target_aware_pool",
            lhs: shape,
            rhs: vec![distances.len()],
        });
    }
    let weights = positional_weights(distances, cfg)?;
    let w = Tensor::from_vec(&[1, distances.len()], weights)?;
    ops::matmul(&w, hidden)
}
