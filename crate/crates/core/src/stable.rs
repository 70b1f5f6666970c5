//! Symmetric α-stable laws and the noise fields that drive the lattice scheme.

use std::f64::consts::PI;

use rand::Rng;
use rand::distr::Distribution;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};
use crate::rng::{open01, SeedSpec};

/// Index α ∈ (0, 2] and scale σ ≥ 0 of a symmetric α-stable law `S_α(σ)`,
/// whose characteristic function is `exp(-|σθ|^α)`.
///
/// At α = 2 this is the centered Gaussian with variance 2σ².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    pub alpha: f64,
    pub sigma: f64,
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(Error::param(format!("stability index must lie in (0, 2], got {alpha}")))
    }
}

impl StableParams {
    pub fn new(alpha: f64, sigma: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::param(format!("scale must be finite and non-negative, got {sigma}")));
        }
        Ok(StableParams { alpha, sigma })
    }

    pub fn standard(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1.0)
    }

    /// Characteristic function `exp(-|σθ|^α)`.
    pub fn cf(&self, theta: f64) -> f64 {
        (-(self.sigma * theta).abs().powf(self.alpha)).exp()
    }
}

/// Free-function form of [`StableParams::cf`].
pub fn stable_cf(params: &StableParams, theta: f64) -> f64 {
    params.cf(theta)
}

/// `c_α = ∫_0^∞ x^{-α} sin x dx` for α ∈ (0, 2).
///
/// The integral converges only conditionally. It is split at multiples of π
/// into half-period integrals whose partial sums alternate around the limit;
/// repeated pairwise averaging of those partial sums (Euler's transform)
/// collapses the oscillation.
pub fn c_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::param(format!("c_alpha needs alpha in (0, 2), got {alpha}")));
    }
    const HALF_PERIODS: usize = 64;
    const AVERAGING: usize = 32;
    let tol = Tolerance::new(1e-15, 1e-14);

    // [0, π]: x^{-α} sin x = x^{1-α} sinc x, and s = x^{2-α} removes the power
    let p = 2.0 - alpha;
    let sinc = |x: f64| if x == 0.0 { 1.0 } else { x.sin() / x };
    let first = quad::integrate(&|s: f64| sinc(s.powf(1.0 / p)) / p, 0.0, PI.powf(p), tol)?;

    let mut partial = Vec::with_capacity(HALF_PERIODS + 1);
    let mut sum = first.value;
    partial.push(sum);
    for k in 1..=HALF_PERIODS {
        let a = k as f64 * PI;
        let piece = quad::integrate(&|x: f64| x.powf(-alpha) * x.sin(), a, a + PI, tol)?;
        sum += piece.value;
        partial.push(sum);
    }
    let mut tail: Vec<f64> = partial[HALF_PERIODS - AVERAGING..].to_vec();
    while tail.len() > 1 {
        tail = tail.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    Ok(tail[0])
}

/// Exact sampler for `S_α(σ)` (Chambers–Mallows–Stuck transform, symmetric case).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymmetricStable {
    params: StableParams,
}

impl SymmetricStable {
    pub fn new(params: StableParams) -> Self {
        SymmetricStable { params }
    }

    /// Maps two independent 64-bit words to one variate.
    #[inline]
    pub fn transform(&self, bits_v: u64, bits_w: u64) -> f64 {
        self.params.sigma * standard_stable(self.params.alpha, bits_v, bits_w)
    }
}

#[inline]
fn standard_stable(alpha: f64, bits_v: u64, bits_w: u64) -> f64 {
    let v = PI * (open01(bits_v) - 0.5);
    let w = -open01(bits_w).ln();
    if alpha == 2.0 {
        2.0 * v.sin() * w.sqrt()
    } else if alpha == 1.0 {
        v.tan()
    } else {
        let e = (1.0 - alpha) / alpha;
        let log_mag = -v.cos().ln() / alpha + e * (((1.0 - alpha) * v).cos().ln() - w.ln());
        (alpha * v).sin() * log_mag.exp()
    }
}

impl Distribution<f64> for SymmetricStable {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = rng.next_u64();
        let b = rng.next_u64();
        self.transform(a, b)
    }
}

/// Noise family chosen by name; the index comes from the run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Exact,
    Pareto,
}

impl NoiseKind {
    pub fn model(self, alpha: f64) -> Result<NoiseModel> {
        match self {
            NoiseKind::Exact => NoiseModel::exact(alpha),
            NoiseKind::Pareto => NoiseModel::pareto(alpha),
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(NoiseKind::Exact),
            "pareto" => Ok(NoiseKind::Pareto),
            _ => Err(Error::param(format!("unknown noise {s:?} (expected exact or pareto)"))),
        }
    }
}

/// Law of the i.i.d. noise attached to lattice cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Exact `S_α(1)` variates.
    ExactSas { alpha: f64 },
    /// Symmetric law with `P(|ξ| ≥ t) = min(1, K t^{-α})`.
    SymmetricPareto { alpha: f64, tail_constant: f64 },
}

impl NoiseModel {
    pub fn exact(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(NoiseModel::ExactSas { alpha })
    }

    /// Symmetric Pareto noise with `K = 1/c_α`, which puts it in the domain of
    /// normal attraction of `S_α(1)` with normalizers `n^{1/α}` and no centering.
    pub fn pareto(alpha: f64) -> Result<Self> {
        let c = c_alpha(alpha)?;
        Ok(NoiseModel::SymmetricPareto {
            alpha,
            tail_constant: 1.0 / c,
        })
    }

    pub fn pareto_with_tail(alpha: f64, tail_constant: f64) -> Result<Self> {
        let m = NoiseModel::SymmetricPareto { alpha, tail_constant };
        m.validate()?;
        Ok(m)
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            NoiseModel::ExactSas { alpha } | NoiseModel::SymmetricPareto { alpha, .. } => alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::ExactSas { alpha } => check_alpha(alpha),
            NoiseModel::SymmetricPareto { alpha, tail_constant } => {
                if !(alpha > 0.0 && alpha < 2.0) {
                    return Err(Error::param(format!("Pareto noise needs alpha in (0, 2), got {alpha}")));
                }
                if !(tail_constant > 0.0 && tail_constant.is_finite()) {
                    return Err(Error::param(format!("tail constant must be positive, got {tail_constant}")));
                }
                Ok(())
            }
        }
    }

    pub(crate) fn sampler(&self) -> NoiseSampler {
        match *self {
            NoiseModel::ExactSas { alpha } => NoiseSampler::Stable { alpha },
            NoiseModel::SymmetricPareto { alpha, tail_constant } => NoiseSampler::Pareto {
                inv_alpha: 1.0 / alpha,
                log_k: tail_constant.ln(),
            },
        }
    }
}

/// Precomputed draw routine for a [`NoiseModel`]; consumes a fixed number of
/// 64-bit words per variate so variates can be addressed by position.
#[derive(Clone, Copy, Debug)]
pub(crate) enum NoiseSampler {
    Stable { alpha: f64 },
    Pareto { inv_alpha: f64, log_k: f64 },
}

impl NoiseSampler {
    pub(crate) fn u64s_per_draw(&self) -> u32 {
        match self {
            NoiseSampler::Stable { .. } => 2,
            NoiseSampler::Pareto { .. } => 1,
        }
    }

    #[inline]
    pub(crate) fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            NoiseSampler::Stable { alpha } => {
                let a = crate::rng::next_u64(rng);
                let b = crate::rng::next_u64(rng);
                standard_stable(alpha, a, b)
            }
            NoiseSampler::Pareto { inv_alpha, log_k } => {
                let bits = crate::rng::next_u64(rng);
                let mag = ((log_k - open01(bits).ln()) * inv_alpha).exp();
                if bits & 1 == 0 {
                    mag
                } else {
                    -mag
                }
            }
        }
    }
}

const BLOCK: usize = 4096;

fn sample_blocks(sampler: NoiseSampler, scale: f64, n: usize, seed: SeedSpec) -> Vec<f64> {
    let mut out = vec![0.0; n];
    out.par_chunks_mut(BLOCK).enumerate().for_each(|(b, chunk)| {
        let mut rng = seed.replicate_rng(b as u64);
        for x in chunk.iter_mut() {
            *x = scale * sampler.draw(&mut rng);
        }
    });
    out
}

/// `n` i.i.d. draws from `S_α(σ)`. Output is a pure function of the arguments.
pub fn sample_sas(params: &StableParams, n: usize, seed: SeedSpec) -> Vec<f64> {
    sample_blocks(NoiseSampler::Stable { alpha: params.alpha }, params.sigma, n, seed)
}

/// `n` i.i.d. draws from a noise model.
pub fn sample_noise(model: &NoiseModel, n: usize, seed: SeedSpec) -> Result<Vec<f64>> {
    model.validate()?;
    Ok(sample_blocks(model.sampler(), 1.0, n, seed))
}
