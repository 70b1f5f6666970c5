//! Linear fractional stable motion (LFSM).
//!
//! Two routes lead to lattice coefficients:
//!
//! * integrals `∫ f dM` against the fractional measure, approximated by the
//!   stable integral of the convolution `f ∗ w` (long range dependence,
//!   `H > 1/α`) or `f' ∗ w` (anti-persistence, `H < 1/α`);
//! * paths `X_t = ∫ f_t^{a,b} dM_α` built from the closed-form kernel, which
//!   lies in `L^α` in both regimes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frac::{self, check_lfsm_params, Derivative, FracKernel, RealFn};
use crate::function::{lp_norm, tail_window, Bounds, FunctionSpec, Integrand, Window};
use crate::lattice::{discretize_integrand, discretize_on, CellCoefficients, IndexWindow, Scheme};
use crate::measure::{sample_fdd_labeled, sample_integral, SampleBatch};
use crate::quad::Tolerance;
use crate::rng::SeedSpec;
use crate::stable::NoiseModel;

/// Truncation tolerance used for LFSM coefficient families by default.
///
/// LFSM kernels decay like `|x|^{H-1/α-1}`, so their `α`-mass tails are heavy:
/// at `α = 1.5, H = 0.7` a relative tolerance of 1e-3 already needs a window
/// of about 3000 time units. At 1e-2 the discarded scale is about 0.3%.
pub const LFSM_TRUNC_TOL: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `H > 1/α`, `β ∈ (1/α, 1)`.
    LongRange,
    /// `H < 1/α`, `β ∈ (0, 1/α)`.
    AntiPersistent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LfsmParams {
    pub alpha: f64,
    pub hurst: f64,
    pub a: f64,
    pub b: f64,
}

impl LfsmParams {
    pub fn new(alpha: f64, hurst: f64, a: f64, b: f64) -> Result<Self> {
        check_lfsm_params(hurst, alpha, a, b)?;
        Ok(LfsmParams { alpha, hurst, a, b })
    }

    pub fn validate(&self) -> Result<()> {
        check_lfsm_params(self.hurst, self.alpha, self.a, self.b)
    }

    /// The kernel `w_{a,b}` with the exponent `β` of the regime.
    pub fn kernel(&self) -> Result<FracKernel> {
        let (beta, _) = beta_of(self)?;
        FracKernel::new(beta, self.a, self.b)
    }

    /// The closed-form kernel `f_t^{a,b}` as a function spec.
    pub fn path_kernel(&self, t: f64) -> FunctionSpec {
        FunctionSpec::LfsmKernel {
            t,
            hurst: self.hurst,
            alpha: self.alpha,
            a: self.a,
            b: self.b,
        }
    }
}

/// `β` and the regime: `β = 1 + 1/α - H` when `H > 1/α`, `β = 1/α - H` when `H < 1/α`.
pub fn beta_of(params: &LfsmParams) -> Result<(f64, Regime)> {
    params.validate()?;
    let inv = 1.0 / params.alpha;
    Ok(if params.hurst > inv {
        (1.0 + inv - params.hurst, Regime::LongRange)
    } else {
        (inv - params.hurst, Regime::AntiPersistent)
    })
}

/// `f ∗ w` (or `f' ∗ w`) as an integrand.
///
/// Point values come from the singular convolution engine. Cell integrals use
/// `∫_cell (φ ∗ w) = ∫ φ(y) K(y) dy`, where `K(y) = ∫_cell w(x - y) dx` is in
/// closed form, so they cost one regular quadrature each.
pub struct ConvolvedIntegrand {
    spec: FunctionSpec,
    derivative: bool,
    kernel: FracKernel,
}

impl ConvolvedIntegrand {
    pub fn new(spec: FunctionSpec, params: &LfsmParams) -> Result<Self> {
        let d = spec.validate()?;
        if d != 1 {
            return Err(Error::Unsupported(format!("LFSM integrals are one-dimensional, got d = {d}")));
        }
        let (beta, regime) = beta_of(params)?;
        let derivative = regime == Regime::AntiPersistent;
        if derivative && !spec.is_smooth() {
            return Err(Error::Unsupported(
                "the anti-persistent regime needs a C¹ integrand; use path sampling (closed-form kernels) for indicators".into(),
            ));
        }
        Ok(ConvolvedIntegrand {
            spec,
            derivative,
            kernel: FracKernel::new(beta, params.a, params.b)?,
        })
    }

    fn with_phi<T>(&self, op: impl FnOnce(&dyn RealFn) -> T) -> T {
        if self.derivative {
            op(&Derivative(&self.spec))
        } else {
            op(&self.spec)
        }
    }
}

impl Integrand for ConvolvedIntegrand {
    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.with_phi(|phi| self.kernel.convolve_at(phi, x[0]).unwrap_or(f64::NAN))
    }

    fn breakpoints(&self, _axis: usize) -> Vec<f64> {
        RealFn::breakpoints(&self.spec)
    }

    fn support(&self) -> Option<Bounds> {
        if self.spec.is_zero() {
            Some(Bounds::interval(0.0, 0.0))
        } else {
            None
        }
    }

    fn core_box(&self) -> Bounds {
        let (lo, hi) = self.spec.extent();
        let w = hi - lo;
        Bounds::interval(lo - w, hi + w)
    }

    fn is_zero(&self) -> bool {
        self.spec.is_zero()
    }

    fn box_integral(&self, b: &Bounds) -> Result<f64> {
        let (lo, hi) = (b.lo[0], b.hi[0]);
        if !(lo < hi) || self.spec.is_zero() {
            return Ok(0.0);
        }
        let tol = Tolerance::new(1e-13 * (hi - lo), 1e-10);
        self.with_phi(|phi| {
            let g = |y: f64| phi.value(y) * self.kernel.cell_weight(lo, hi, y);
            frac::integrate_line(phi, &g, &[lo, hi], tol)
        })
    }
}

/// Cell-average coefficients of `f ∗ w` (long range) or `f' ∗ w` (anti-persistent).
pub fn discretize_lfsm(spec: &FunctionSpec, params: &LfsmParams, h: f64, trunc_tol: f64) -> Result<CellCoefficients> {
    let g = ConvolvedIntegrand::new(spec.clone(), params)?;
    discretize_integrand(&g, h, params.alpha, trunc_tol, Scheme::CellAverage)
}

/// Samples of `∫ f dM` for the fractional measure, via the convolved integrand.
pub fn sample_lfsm_integral(
    spec: &FunctionSpec,
    params: &LfsmParams,
    h: f64,
    trunc_tol: f64,
    noise: &NoiseModel,
    n: usize,
    seed: SeedSpec,
) -> Result<SampleBatch> {
    let c = discretize_lfsm(spec, params, h, trunc_tol)?;
    sample_integral(&c, noise, n, seed)
}

/// Joint samples of `(X_{t_1}, …, X_{t_m})`, one column per time, from the
/// closed-form kernels `f_t^{a,b}` discretized on a common grid.
pub fn sample_lfsm_path(
    params: &LfsmParams,
    times: &[f64],
    h: f64,
    trunc_tol: f64,
    noise: &NoiseModel,
    n: usize,
    seed: SeedSpec,
) -> Result<SampleBatch> {
    params.validate()?;
    if times.is_empty() {
        return Err(Error::Empty("time list"));
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::param("path times must be finite and non-negative"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("path times must be strictly increasing"));
    }
    // one window for every time, so increments X_t - X_s see the exact kernel difference
    let mut window = IndexWindow::empty(1);
    for &t in times {
        let w = tail_window(&params.path_kernel(t), params.alpha, trunc_tol)?;
        if let Some(b) = w.bounds {
            window = window.union(&IndexWindow::covering(&b, h)?);
        }
    }
    let families = times
        .iter()
        .map(|&t| discretize_on(&params.path_kernel(t), h, params.alpha, &window, Scheme::CellAverage))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&CellCoefficients> = families.iter().collect();
    let labels: Vec<String> = times.iter().map(|t| format!("t={t}")).collect();
    sample_fdd_labeled(&refs, &labels, noise, n, seed)
}

/// `‖f_1^{a,b}‖_{L^α}`, the scale of `X_1`. Dividing `(a, b)` by it gives a
/// process with `X_1 ~ S_α(1)`.
pub fn unit_scale(params: &LfsmParams) -> Result<f64> {
    params.validate()?;
    lp_norm(&params.path_kernel(1.0), params.alpha, &Window::Auto)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_examples() {
        let (b, r) = beta_of(&LfsmParams::new(1.5, 0.9, 1.0, 0.0).unwrap()).unwrap();
        assert!((b - (1.0 + 2.0 / 3.0 - 0.9)).abs() < 1e-15);
        assert_eq!(r, Regime::LongRange);
        assert!(b > 2.0 / 3.0 && b < 1.0);
        let (b, r) = beta_of(&LfsmParams::new(1.5, 0.4, 1.0, 0.0).unwrap()).unwrap();
        assert!((b - (2.0 / 3.0 - 0.4)).abs() < 1e-15);
        assert_eq!(r, Regime::AntiPersistent);
        assert!(LfsmParams::new(2.0, 0.5, 1.0, 0.0).is_err());
        assert!(LfsmParams::new(1.5, 0.7, 0.0, 0.0).is_err());
        assert!(LfsmParams::new(0.9, 0.7, 1.0, 0.0).is_err());
    }

    #[test]
    fn convolved_indicator_matches_closed_form() {
        let p = LfsmParams::new(1.5, 0.8, 1.0, 0.4).unwrap();
        let k = p.kernel().unwrap();
        let g = ConvolvedIntegrand::new(FunctionSpec::indicator(0.0, 1.0), &p).unwrap();
        for &x in &[-3.0, -0.2, 0.5, 1.7] {
            assert!((g.eval(&[x]) - k.indicator_convolution(1.0, x)).abs() < 1e-9);
        }
        // cell integrals against quadrature of the closed form
        for &(lo, hi) in &[(-2.0, -1.9), (-0.05, 0.05), (0.3, 1.3), (5.0, 5.5)] {
            let c = g.box_integral(&Bounds::interval(lo, hi)).unwrap();
            let f = |x: f64| k.indicator_convolution(1.0, x);
            let q = crate::quad::integrate_split(&f, lo, hi, &[0.0, 1.0], Tolerance::new(1e-13, 1e-12), true).unwrap().value;
            assert!((c - q).abs() < 1e-10, "{lo},{hi}: {c} vs {q}");
        }
    }

    #[test]
    fn anti_persistent_indicator_is_unsupported() {
        let p = LfsmParams::new(1.5, 0.4, 1.0, 0.0).unwrap();
        let e = discretize_lfsm(&FunctionSpec::indicator(0.0, 1.0), &p, 0.1, 1e-3);
        assert!(matches!(e, Err(Error::Unsupported(_))));
    }

    #[test]
    fn zero_spec_gives_empty_family() {
        let p = LfsmParams::new(1.5, 0.8, 1.0, 0.0).unwrap();
        let c = discretize_lfsm(&FunctionSpec::zero(1), &p, 0.1, 1e-3).unwrap();
        assert!(c.is_empty());
        let b = sample_lfsm_integral(&FunctionSpec::zero(1), &p, 0.1, 1e-3, &NoiseModel::exact(1.5).unwrap(), 20, SeedSpec::new(1, 0)).unwrap();
        assert!(b.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn long_range_norm_matches_kernel_norm() {
        // ‖1_{[0,1]} ∗ w‖ = ‖f_1‖/(1-β) for b = 0; compare including the extrapolated tails
        let p = LfsmParams::new(1.5, 0.8, 1.0, 0.0).unwrap();
        let (beta, _) = beta_of(&p).unwrap();
        let c = discretize_lfsm(&FunctionSpec::indicator(0.0, 1.0), &p, 0.1, 1e-2).unwrap();
        let with_tail = (c.alpha_mass() + c.tail_mass_bound).powf(1.0 / 1.5);
        let kernel = tail_window(&p.path_kernel(1.0), 1.5, 1e-9).unwrap().total_mass().powf(1.0 / 1.5) / (1.0 - beta);
        assert!((with_tail - kernel).abs() < 1e-3 * kernel, "{with_tail} vs {kernel}");
    }

    #[test]
    fn anti_persistent_coefficients_shrink() {
        let p = LfsmParams::new(1.5, 0.4, 1.0, 0.0).unwrap();
        let g = FunctionSpec::gauss(0.0, 1.0);
        let mut last = f64::INFINITY;
        for &h in &[0.2, 0.1, 0.05] {
            let c = discretize_lfsm(&g, &p, h, 1e-2).unwrap();
            let (la, li) = c.norms();
            assert!(la.is_finite() && li < last, "h={h}: {li}");
            last = li;
        }
    }

    #[test]
    fn path_rejects_bad_times_and_zero_time_column_vanishes() {
        let p = LfsmParams::new(1.5, 0.7, 1.0, 0.0).unwrap();
        let noise = NoiseModel::exact(1.5).unwrap();
        assert!(sample_lfsm_path(&p, &[1.0, 1.0], 0.25, 1e-2, &noise, 5, SeedSpec::new(3, 0)).is_err());
        let b = sample_lfsm_path(&p, &[0.0, 1.0], 0.25, 1e-2, &noise, 50, SeedSpec::new(3, 0)).unwrap();
        assert!(b.column(0).iter().all(|v| *v == 0.0));
        assert!(b.column(1).iter().any(|v| *v != 0.0));
    }

    #[test]
    fn coefficients_are_linear_in_weights() {
        let h = 0.25;
        let pa = LfsmParams::new(1.5, 0.7, 1.0, 0.0).unwrap();
        let pb = LfsmParams::new(1.5, 0.7, 0.0, 1.0).unwrap();
        let pab = LfsmParams::new(1.5, 0.7, 2.0, 3.0).unwrap();
        let w = crate::lattice::IndexWindow::new(vec![-40], vec![40]);
        let on = |p: &LfsmParams| crate::lattice::discretize_on(&p.path_kernel(1.0), h, 1.5, &w, Scheme::CellAverage).unwrap();
        let (ca, cb, cab) = (on(&pa), on(&pb), on(&pab));
        for i in 0..w.len() {
            let want = 2.0 * ca.values[i] + 3.0 * cb.values[i];
            assert!((cab.values[i] - want).abs() < 1e-13 * (1.0 + want.abs()));
        }
    }
}
