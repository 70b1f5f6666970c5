//! Statistical and numerical checks: empirical CFs, two-sample KS, the
//! Lindeberg–Feller type conditions and `ℓ^α` membership of sequences.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::{lp_norm, FunctionSpec, Window};
use crate::lattice::{discretize_integrand, CellCoefficients, Scheme, DEFAULT_TRUNC_TOL};
use crate::measure::sample_integral;
use crate::rng::SeedSpec;
use crate::stable::{NoiseModel, StableParams};

/// Level of every KS acceptance in the harness.
pub const KS_LEVEL: f64 = 0.01;

/// `θ ∈ {-3, -2.9, …, 3}`.
pub fn default_thetas() -> Vec<f64> {
    (-30..=30).map(|i| i as f64 / 10.0).collect()
}

/// Half-width `3/√n` of the CF band.
pub fn cf_band(n: usize) -> f64 {
    3.0 / (n as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcfReport {
    pub thetas: Vec<f64>,
    pub ecf_real: Vec<f64>,
    pub ecf_imag: Vec<f64>,
    pub target: Vec<f64>,
    pub sup_distance: f64,
    pub n: usize,
    pub band: f64,
}

/// `(1/n) Σ exp(iθx_k)` on a grid, compared with the CF of `target`.
pub fn empirical_cf(samples: &[f64], thetas: &[f64], target: &StableParams) -> Result<EcfReport> {
    if samples.is_empty() {
        return Err(Error::Empty("sample"));
    }
    let n = samples.len();
    let nf = n as f64;
    let (ecf_real, ecf_imag): (Vec<f64>, Vec<f64>) = thetas
        .par_iter()
        .map(|&t| {
            // sequential sums keep the result independent of the thread count
            let (mut c, mut s) = (0.0, 0.0);
            for &x in samples {
                let (sn, cs) = (t * x).sin_cos();
                c += cs;
                s += sn;
            }
            (c / nf, s / nf)
        })
        .unzip();
    let target: Vec<f64> = thetas.iter().map(|&t| target.cf(t)).collect();
    let sup_distance = ecf_real
        .iter()
        .zip(&ecf_imag)
        .zip(&target)
        .map(|((re, im), tg)| (re - tg).hypot(*im))
        .fold(0.0, f64::max);
    Ok(EcfReport {
        thetas: thetas.to_vec(),
        ecf_real,
        ecf_imag,
        target,
        sup_distance,
        n,
        band: cf_band(n),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

impl KsResult {
    pub fn accepts(&self, level: f64) -> bool {
        self.p_value >= level
    }
}

fn sorted(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::param("KS input contains NaN"));
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Kolmogorov survival function `Q(λ) = 2 Σ_{j≥1} (-1)^{j-1} e^{-2j²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov statistic with the asymptotic p-value
/// (Stephens' small-sample correction of the effective size).
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<KsResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty("KS sample"));
    }
    let (xs, ys) = (sorted(x)?, sorted(y)?);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n && j < m {
        let v = if xs[i] <= ys[j] { xs[i] } else { ys[j] };
        while i < n && xs[i] == v {
            i += 1;
        }
        while j < m && ys[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let p_value = kolmogorov_q((en + 0.12 + 0.11 / en) * d);
    Ok(KsResult { statistic: d, p_value })
}

/// Sample quantiles with linear interpolation between order statistics.
pub fn quantiles(samples: &[f64], probs: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Empty("sample"));
    }
    let v = sorted(samples)?;
    probs
        .iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(format!("probability {p} outside [0, 1]")));
            }
            let pos = p * (v.len() - 1) as f64;
            let k = pos.floor() as usize;
            let frac = pos - k as f64;
            Ok(if k + 1 < v.len() { v[k] + frac * (v[k + 1] - v[k]) } else { v[k] })
        })
        .collect()
}

/// Thresholds for [`lf_conditions`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LfCriteria {
    /// Largest accepted `|‖u‖_α - σ| / σ` for the last entry.
    pub gap_rel: f64,
    /// The last `ℓ^∞` norm must be at most this fraction of the first.
    pub decay_ratio: f64,
}

impl Default for LfCriteria {
    fn default() -> Self {
        LfCriteria { gap_rel: 1e-3, decay_ratio: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LfConditionReport {
    pub alpha: f64,
    pub sigma_target: f64,
    pub l_alpha_norms: Vec<f64>,
    pub l_inf_norms: Vec<f64>,
    /// Last `ℓ^α` norm.
    pub sigma_hat: f64,
    /// Last over first `ℓ^∞` norm.
    pub inf_trend: f64,
    pub final_gap: f64,
    pub criteria: LfCriteria,
    pub condition1: bool,
    pub condition2: bool,
}

impl LfConditionReport {
    pub fn pass(&self) -> bool {
        self.condition1 && self.condition2
    }
}

/// Checks the two hypotheses of the stable limit theorem on a sequence of
/// coefficient families: `‖u^{(j)}‖_α → σ` and `‖u^{(j)}‖_∞ → 0`.
///
/// Convergence is judged from a finite sequence: the distance to `σ` must not
/// grow and must end below `gap_rel·σ`; the sup norms must not grow and must
/// shrink by `decay_ratio` overall.
pub fn lf_conditions(seq: &[CellCoefficients], sigma_target: f64, criteria: LfCriteria) -> Result<LfConditionReport> {
    if seq.len() < 3 {
        return Err(Error::param(format!("need at least 3 coefficient families, got {}", seq.len())));
    }
    let alpha = seq[0].alpha;
    if let Some(c) = seq.iter().find(|c| c.alpha != alpha) {
        return Err(Error::Incompatible(format!("alpha {} differs from {}", c.alpha, alpha)));
    }
    if !(sigma_target > 0.0 && sigma_target.is_finite()) {
        return Err(Error::param("sigma_target must be positive"));
    }
    let (l_alpha_norms, l_inf_norms): (Vec<f64>, Vec<f64>) = seq.iter().map(|c| c.norms()).unzip();
    let slack = 1e-12;
    let gaps: Vec<f64> = l_alpha_norms.iter().map(|v| (v - sigma_target).abs()).collect();
    let final_gap = *gaps.last().unwrap();
    let condition1 = gaps.windows(2).all(|w| w[1] <= w[0] + slack * sigma_target) && final_gap <= criteria.gap_rel * sigma_target;
    let first = l_inf_norms[0];
    let last = *l_inf_norms.last().unwrap();
    let inf_trend = if first > 0.0 { last / first } else { 0.0 };
    let condition2 = l_inf_norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack)) && inf_trend <= criteria.decay_ratio;
    Ok(LfConditionReport {
        alpha,
        sigma_target,
        sigma_hat: *l_alpha_norms.last().unwrap(),
        l_alpha_norms,
        l_inf_norms,
        inf_trend,
        final_gap,
        criteria,
        condition1,
        condition2,
    })
}

/// A real sequence `(u_k)_{k≥1}` for [`lalpha_membership`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Sequence {
    /// `u_k = coeff · k^{-rho}`.
    PowerDecay { coeff: f64, rho: f64 },
    Finite { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub in_l_alpha: bool,
    /// `ρα = 1`: the p-series diverges, so the sequence counts as outside.
    pub boundary: bool,
    /// `(K, (Σ_{k≤K} |u_k|^α)^{1/α})` at `K = 10, 100, …` (every prefix for finite lists).
    pub partial_norms: Vec<(u64, f64)>,
}

pub fn lalpha_membership(u: &Sequence, alpha: f64) -> Membership {
    match u {
        Sequence::PowerDecay { coeff, rho } => {
            let e = rho * alpha;
            let boundary = (e - 1.0).abs() <= 1e-12;
            let mut partial_norms = Vec::new();
            let mut sum = 0.0;
            let mut k = 1u64;
            for decade in 1..=6 {
                let end = 10u64.pow(decade);
                while k <= end {
                    sum += (coeff.abs() * (k as f64).powf(-rho)).powf(alpha);
                    k += 1;
                }
                partial_norms.push((end, sum.powf(1.0 / alpha)));
            }
            Membership {
                in_l_alpha: *coeff == 0.0 || (e > 1.0 && !boundary),
                boundary,
                partial_norms,
            }
        }
        Sequence::Finite { values } => {
            let mut sum = 0.0;
            let partial_norms = values
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    sum += v.abs().powf(alpha);
                    (i as u64 + 1, sum.powf(1.0 / alpha))
                })
                .collect();
            Membership {
                in_l_alpha: true,
                boundary: false,
                partial_norms,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub sup_distance: f64,
    pub l_alpha: f64,
    pub l_inf: f64,
    /// Wall time in seconds; not part of any deterministic output.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub alpha: f64,
    /// `‖f‖_{L^α}`.
    pub sigma: f64,
    pub n: usize,
    pub band: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceStudy {
    /// Non-increasing sup distance down to the CF band: each step may grow
    /// only while staying inside the band.
    pub fn monotone(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].sup_distance <= w[0].sup_distance.max(self.band))
    }

    pub fn last_distance(&self) -> Option<f64> {
        self.rows.last().map(|r| r.sup_distance)
    }
}

/// For each `h`: discretize, sample `n` replicates and measure the sup CF
/// distance to `exp(-‖f‖_α^α |θ|^α)`. Every `h` reuses the same seed.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    spec: &FunctionSpec,
    alpha: f64,
    noise: &NoiseModel,
    scheme: Scheme,
    h_list: &[f64],
    n: usize,
    thetas: &[f64],
    seed: SeedSpec,
) -> Result<ConvergenceStudy> {
    spec.validate()?;
    noise.validate()?;
    if noise.alpha() != alpha {
        return Err(Error::Incompatible(format!("noise alpha {} differs from {}", noise.alpha(), alpha)));
    }
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::param("h_list must be strictly decreasing"));
    }
    let sigma = lp_norm(spec, alpha, &Window::Auto)?;
    let target = StableParams::new(alpha, sigma)?;
    let rows = h_list
        .iter()
        .map(|&h| {
            let start = Instant::now();
            let c = discretize_integrand(spec, h, alpha, DEFAULT_TRUNC_TOL, scheme)?;
            let batch = sample_integral(&c, noise, n, seed)?;
            let ecf = empirical_cf(&batch.values, thetas, &target)?;
            let (l_alpha, l_inf) = c.norms();
            Ok(ConvergenceRow {
                h,
                sup_distance: ecf.sup_distance,
                l_alpha,
                l_inf,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceStudy {
        alpha,
        sigma,
        n,
        band: cf_band(n.max(1)),
        rows,
    })
}
