//! Fractional integro-differentiation on the real line.
//!
//! Conventions: the power kernel `w(x) = a·x_-^{-β} + b·x_+^{-β}` carries no
//! Gamma factor, while the Riemann–Liouville operators carry `1/Γ(δ)` and
//! `1/Γ(1-β)`:
//!
//! ```text
//! I^δ_+ f(x) = 1/Γ(δ) ∫_0^∞ f(x - s) s^{δ-1} ds
//! I^δ_- f(x) = 1/Γ(δ) ∫_0^∞ f(x + s) s^{δ-1} ds
//! D^β_+ f(x) =  1/Γ(1-β) ∫_0^∞ f'(x - s) s^{-β} ds
//! D^β_- f(x) = -1/Γ(1-β) ∫_0^∞ f'(x + s) s^{-β} ds
//! ```
//!
//! All one-sided integrals go through a single engine that integrates the
//! power weight exactly on the panel touching the singular point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::{FunctionSpec, Integrand};
use crate::quad::{self, Tolerance};
use crate::io::{fmt_f64, parse_f64, Table};

/// Which half-line the operator looks at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Integrates over the past, `t < x`.
    Plus,
    /// Integrates over the future, `t > x`.
    Minus,
}

impl Side {
    fn dir(self) -> f64 {
        match self {
            Side::Plus => -1.0,
            Side::Minus => 1.0,
        }
    }
}

impl std::str::FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" | "plus" => Ok(Side::Plus),
            "-" | "minus" => Ok(Side::Minus),
            _ => Err(Error::param(format!("side must be + or -, got {s:?}"))),
        }
    }
}

/// A real function of one variable the operators can act on.
pub trait RealFn: Sync {
    fn value(&self, x: f64) -> f64;

    /// `f'(x)`, or `None` when `f` is not C¹.
    fn derivative(&self, x: f64) -> Option<f64>;

    fn is_smooth(&self) -> bool;

    /// Points where `f` or its derivative may be irregular.
    fn breakpoints(&self) -> Vec<f64>;

    /// Interval holding the features of `f`; sets the quadrature length scale.
    fn extent(&self) -> (f64, f64);

    /// Bounding interval of the support, when compact.
    fn support(&self) -> Option<(f64, f64)> {
        None
    }

    /// Rejects inputs the operators cannot handle.
    fn check(&self) -> Result<()> {
        Ok(())
    }
}

impl RealFn for FunctionSpec {
    fn value(&self, x: f64) -> f64 {
        self.eval(&[x])
    }

    fn derivative(&self, x: f64) -> Option<f64> {
        FunctionSpec::derivative(self, x)
    }

    fn is_smooth(&self) -> bool {
        FunctionSpec::is_smooth(self)
    }

    fn breakpoints(&self) -> Vec<f64> {
        Integrand::breakpoints(self, 0)
    }

    fn extent(&self) -> (f64, f64) {
        let b = self.core_box();
        (b.lo[0], b.hi[0])
    }

    fn support(&self) -> Option<(f64, f64)> {
        Integrand::support(self).map(|b| (b.lo[0], b.hi[0]))
    }

    fn check(&self) -> Result<()> {
        let d = self.validate()?;
        if d != 1 {
            return Err(Error::Unsupported(format!("fractional operators act on d = 1 functions, got d = {d}")));
        }
        Ok(())
    }
}

const TOL: Tolerance = Tolerance::new(1e-11, 1e-11);

/// `∫_{s0}^∞ f(x + dir·s) s^e ds` for `e > -1`.
fn one_sided<F: RealFn + ?Sized>(f: &F, x: f64, dir: f64, e: f64, s0: f64, tol: Tolerance) -> Result<f64> {
    let (clo, chi) = f.extent();
    let width = (chi - clo).max(1e-12);
    let (mut a, mut b) = (s0, f64::INFINITY);
    if let Some((lo, hi)) = f.support() {
        let (sa, sb) = if dir > 0.0 { (lo - x, hi - x) } else { (x - hi, x - lo) };
        a = a.max(sa);
        b = sb;
        if !(a < b) {
            return Ok(0.0);
        }
    }
    let core_end = if dir > 0.0 { chi - x } else { x - clo };
    let end = if b.is_finite() { b } else { core_end.max(a) + width };
    let mut breaks: Vec<f64> = f
        .breakpoints()
        .into_iter()
        .map(|p| dir * (p - x))
        .filter(|&s| s > a && s < end)
        .collect();
    breaks.sort_by(f64::total_cmp);

    let g = |s: f64| f.value(x + dir * s);
    let weighted = |s: f64| g(s) * s.powf(e);
    let mut total = 0.0;
    let mut start = a;
    if a == 0.0 {
        let s1 = breaks.first().copied().unwrap_or(end).min(width).min(end);
        total += quad::integrate_power_weight(&g, e, s1, tol)?.value;
        start = s1;
    }
    if start < end {
        total += quad::integrate_split(&weighted, start, end, &breaks, tol, true)?.value;
    }
    if b.is_infinite() {
        total += quad::integrate_tail(&weighted, end, true, width, tol)?.value;
    }
    Ok(total)
}

/// `∫_R g` for an integrand `g` attached to `f`: over the support of `f` when
/// compact, otherwise over its extent plus two semi-infinite tails.
pub(crate) fn integrate_line<F: RealFn + ?Sized, G: Fn(f64) -> f64>(f: &F, g: &G, extra_breaks: &[f64], tol: Tolerance) -> Result<f64> {
    let mut breaks = f.breakpoints();
    breaks.extend_from_slice(extra_breaks);
    if let Some((lo, hi)) = f.support() {
        if !(lo < hi) {
            return Ok(0.0);
        }
        return Ok(quad::integrate_split(g, lo, hi, &breaks, tol, true)?.value);
    }
    let (mut lo, mut hi) = f.extent();
    for &b in &breaks {
        lo = lo.min(b);
        hi = hi.max(b);
    }
    let width = (hi - lo).max(1e-12);
    let mid = quad::integrate_split(g, lo, hi, &breaks, tol, true)?.value;
    let right = quad::integrate_tail(g, hi, true, width, tol)?.value;
    let left = quad::integrate_tail(g, lo, false, width, tol)?.value;
    Ok(left + mid + right)
}

/// Same as [`one_sided`] with `f'` in place of `f`.
fn one_sided_derivative<F: RealFn + ?Sized>(f: &F, x: f64, dir: f64, e: f64, tol: Tolerance) -> Result<f64> {
    let d = Derivative(f);
    one_sided(&d, x, dir, e, 0.0, tol)
}

/// `f'` viewed as a function.
pub(crate) struct Derivative<'a, F: RealFn + ?Sized>(pub(crate) &'a F);

impl<F: RealFn + ?Sized> RealFn for Derivative<'_, F> {
    fn value(&self, x: f64) -> f64 {
        self.0.derivative(x).unwrap_or(f64::NAN)
    }
    fn derivative(&self, _x: f64) -> Option<f64> {
        None
    }
    fn is_smooth(&self) -> bool {
        false
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.0.breakpoints()
    }
    fn extent(&self) -> (f64, f64) {
        self.0.extent()
    }
    fn support(&self) -> Option<(f64, f64)> {
        self.0.support()
    }
}

fn require_smooth<F: RealFn + ?Sized>(f: &F) -> Result<()> {
    f.check()?;
    if !f.is_smooth() {
        return Err(Error::Unsupported(
            "derivative operators need a C¹ integrand (e.g. gauss_bump and combinations of it)".into(),
        ));
    }
    Ok(())
}

fn check_order(name: &str, v: f64, max_inclusive: bool) -> Result<()> {
    let ok = v > 0.0 && (v < 1.0 || (max_inclusive && v == 1.0));
    if !ok {
        return Err(Error::param(format!("{name} must lie in (0, 1), got {v}")));
    }
    Ok(())
}

/// Riemann–Liouville fractional integral `I^δ_± f(x)`. `δ = 1` is accepted
/// and gives the running integral.
pub fn rl_integral<F: RealFn + ?Sized>(f: &F, delta: f64, side: Side, x: f64) -> Result<f64> {
    f.check()?;
    check_order("delta", delta, true)?;
    rl_integral_tol(f, delta, side, x, TOL)
}

fn rl_integral_tol<F: RealFn + ?Sized>(f: &F, delta: f64, side: Side, x: f64, tol: Tolerance) -> Result<f64> {
    Ok(one_sided(f, x, side.dir(), delta - 1.0, 0.0, tol)? / libm::tgamma(delta))
}

/// Riemann–Liouville fractional derivative `D^β_± f(x)` of a C¹ function,
/// evaluated through the `f'` form.
pub fn rl_derivative<F: RealFn + ?Sized>(f: &F, beta: f64, side: Side, x: f64) -> Result<f64> {
    require_smooth(f)?;
    check_order("beta", beta, false)?;
    let v = one_sided_derivative(f, x, side.dir(), -beta, TOL)? / libm::tgamma(1.0 - beta);
    Ok(match side {
        Side::Plus => v,
        Side::Minus => -v,
    })
}

/// Marchaud derivative `β/Γ(1-β) ∫_0^∞ (f(x) - f(x ∓ s)) s^{-1-β} ds`.
pub fn marchaud_derivative<F: RealFn + ?Sized>(f: &F, beta: f64, side: Side, x: f64) -> Result<f64> {
    require_smooth(f)?;
    check_order("beta", beta, false)?;
    let dir = side.dir();
    let fx = f.value(x);
    let (clo, chi) = f.extent();
    let s0 = (chi - clo).max(1e-12);
    // near part: (f(x) - f(x+dir s))/s is smooth and tends to -dir·f'(x)
    let quotient = |s: f64| {
        if s < 1e-4 * s0 {
            -dir * f.derivative(x + 0.5 * dir * s).unwrap_or(f64::NAN)
        } else {
            (fx - f.value(x + dir * s)) / s
        }
    };
    let near = quad::integrate_power_weight(&quotient, -beta, s0, TOL)?.value;
    // far part: f(x)·∫_{s0}^∞ s^{-1-β} minus the integral of the shifted function
    let far = fx * s0.powf(-beta) / beta - one_sided(f, x, dir, -1.0 - beta, s0, TOL)?;
    Ok(beta / libm::tgamma(1.0 - beta) * (near + far))
}

/// `I^δ_± f` as a function in its own right, so operators can be composed.
pub struct RlIntegralFn<'a, F: RealFn + ?Sized> {
    pub inner: &'a F,
    pub delta: f64,
    pub side: Side,
}

const INNER_TOL: Tolerance = Tolerance::new(1e-13, 1e-13);

impl<'a, F: RealFn + ?Sized> RlIntegralFn<'a, F> {
    pub fn new(inner: &'a F, delta: f64, side: Side) -> Result<Self> {
        inner.check()?;
        check_order("delta", delta, true)?;
        Ok(RlIntegralFn { inner, delta, side })
    }
}

impl<F: RealFn + ?Sized> RealFn for RlIntegralFn<'_, F> {
    fn value(&self, x: f64) -> f64 {
        rl_integral_tol(self.inner, self.delta, self.side, x, INNER_TOL).unwrap_or(f64::NAN)
    }

    fn derivative(&self, x: f64) -> Option<f64> {
        if !self.inner.is_smooth() {
            return None;
        }
        // (I^δ f)' = I^δ (f')
        let v = one_sided_derivative(self.inner, x, self.side.dir(), self.delta - 1.0, INNER_TOL).ok()?;
        Some(v / libm::tgamma(self.delta))
    }

    fn is_smooth(&self) -> bool {
        self.inner.is_smooth()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints()
    }

    fn extent(&self) -> (f64, f64) {
        self.inner.extent()
    }
}

/// The power kernel `w(x) = a·x_-^{-β} + b·x_+^{-β}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FracKernel {
    pub beta: f64,
    pub a: f64,
    pub b: f64,
}

impl FracKernel {
    pub fn new(beta: f64, a: f64, b: f64) -> Result<Self> {
        let k = FracKernel { beta, a, b };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        check_order("beta", self.beta, false)?;
        if !(self.a >= 0.0 && self.b >= 0.0 && self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::param("kernel weights a, b must be finite and non-negative"));
        }
        if self.a == 0.0 && self.b == 0.0 {
            return Err(Error::param("kernel weights a and b cannot both vanish"));
        }
        Ok(())
    }

    /// `w(x)`; the kernel is singular at 0.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if x == 0.0 {
            return Err(Error::Singularity { x });
        }
        Ok(if x < 0.0 {
            self.a * (-x).powf(-self.beta)
        } else {
            self.b * x.powf(-self.beta)
        })
    }

    /// `(f ∗ w)(x) = a ∫_0^∞ f(x+s) s^{-β} ds + b ∫_0^∞ f(x-s) s^{-β} ds`.
    pub fn convolve_at<F: RealFn + ?Sized>(&self, f: &F, x: f64) -> Result<f64> {
        self.convolve_at_tol(f, x, TOL)
    }

    fn convolve_at_tol<F: RealFn + ?Sized>(&self, f: &F, x: f64, tol: Tolerance) -> Result<f64> {
        let mut v = 0.0;
        if self.a != 0.0 {
            v += self.a * one_sided(f, x, 1.0, -self.beta, 0.0, tol)?;
        }
        if self.b != 0.0 {
            v += self.b * one_sided(f, x, -1.0, -self.beta, 0.0, tol)?;
        }
        Ok(v)
    }

    /// `∫_lo^hi w(x - y) dx`: the kernel integrated over a cell, as a function of `y`.
    pub fn cell_weight(&self, lo: f64, hi: f64, y: f64) -> f64 {
        let p = 1.0 - self.beta;
        // P(u) - P(v) for P(z) = z_+^p / p
        let diff = |u: f64, v: f64| {
            if u > 0.0 && v > 0.0 {
                pow_diff(u, v, p) / p
            } else {
                (u.max(0.0).powf(p) - v.max(0.0).powf(p)) / p
            }
        };
        let mut v = 0.0;
        if self.a != 0.0 {
            v += self.a * diff(y - lo, y - hi);
        }
        if self.b != 0.0 {
            v += self.b * diff(hi - y, lo - y);
        }
        v
    }

    /// Closed form of `(1_{[0,t]} ∗ w)(x)`.
    pub fn indicator_convolution(&self, t: f64, x: f64) -> f64 {
        let p = 1.0 - self.beta;
        let pos = |y: f64| if y > 0.0 { y.powf(p) } else { 0.0 };
        let (lo, hi) = if t >= 0.0 { (0.0, t) } else { (t, 0.0) };
        let v = self.a * (pos(hi - x) - pos(lo - x)) + self.b * (pos(x - lo) - pos(x - hi));
        let v = v / p;
        if t >= 0.0 {
            v
        } else {
            -v
        }
    }
}

/// `kernel_eval` as a free function.
pub fn kernel_eval(kernel: &FracKernel, x: f64) -> Result<f64> {
    kernel.eval(x)
}

/// Values of a function on `origin + i·spacing`, `i = 0..len`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub origin: f64,
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl GridFunction {
    /// A zero-filled grid with `len` points.
    pub fn template(origin: f64, spacing: f64, len: usize) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite() && origin.is_finite()) {
            return Err(Error::param(format!("grid spacing must be positive, got {spacing}")));
        }
        Ok(GridFunction {
            origin,
            spacing,
            values: vec![0.0; len],
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.spacing
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.x(i)).collect()
    }

    /// Fills the grid with `op(x_i)`, in parallel, reporting the first failing point.
    pub fn map<O>(&self, op: O) -> Result<GridFunction>
    where
        O: Fn(f64) -> Result<f64> + Sync,
    {
        let values = (0..self.len())
            .into_par_iter()
            .map(|i| op(self.x(i)))
            .collect::<Result<Vec<f64>>>()?;
        Ok(GridFunction {
            origin: self.origin,
            spacing: self.spacing,
            values,
        })
    }

    pub fn to_table(&self) -> Table {
        let manifest = serde_json::json!({
            "kind": "grid_function",
            "origin": self.origin,
            "spacing": self.spacing,
            "len": self.len(),
        });
        let mut t = Table::new(manifest, vec!["x".into(), "value".into()]);
        for (i, v) in self.values.iter().enumerate() {
            t.rows.push(vec![fmt_f64(self.x(i)), fmt_f64(*v)]);
        }
        t
    }

    pub fn from_table(t: &Table) -> Result<GridFunction> {
        t.expect_kind("grid_function")?;
        let origin: f64 = t.field("origin")?;
        let spacing: f64 = t.field("spacing")?;
        let len: usize = t.field("len")?;
        if len != t.rows.len() {
            return Err(Error::Parse(format!("manifest declares {len} points, found {}", t.rows.len())));
        }
        let values = t.rows.iter().map(|r| parse_f64(&r[1])).collect::<Result<Vec<_>>>()?;
        Ok(GridFunction { origin, spacing, values })
    }
}

/// `f ∗ w` on the points of `grid`.
pub fn convolve_kernel<F: RealFn + ?Sized>(f: &F, kernel: &FracKernel, grid: &GridFunction) -> Result<GridFunction> {
    f.check()?;
    kernel.validate()?;
    grid.map(|x| kernel.convolve_at(f, x))
}

/// Validates LFSM kernel parameters.
pub fn check_lfsm_params(hurst: f64, alpha: f64, a: f64, b: f64) -> Result<()> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::param(format!("LFSM needs alpha in (1, 2], got {alpha}")));
    }
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::param(format!("Hurst index must lie in (0, 1), got {hurst}")));
    }
    if hurst == 1.0 / alpha {
        return Err(Error::param(format!("H = 1/alpha = {hurst} is excluded")));
    }
    if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) || (a == 0.0 && b == 0.0) {
        return Err(Error::param("LFSM weights must be non-negative and not both zero"));
    }
    Ok(())
}

/// `u^p - v^p` for `u, v > 0` without cancellation when `u ≈ v`.
pub(crate) fn pow_diff(u: f64, v: f64, p: f64) -> f64 {
    let m = u.max(v);
    if (u - v).abs() <= 0.5 * m {
        v.powf(p) * (p * ((u - v) / v).ln_1p()).exp_m1()
    } else {
        u.powf(p) - v.powf(p)
    }
}

/// `y_+^p`, with a pole of `+∞` at `y = 0` when `p < 0`.
fn pos_pow(y: f64, p: f64) -> f64 {
    if y > 0.0 {
        y.powf(p)
    } else if y == 0.0 && p < 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// `u_+^γ - v_+^γ`, paired to avoid cancellation.
fn half_kernel(u: f64, v: f64, g: f64) -> f64 {
    if u > 0.0 && v > 0.0 {
        pow_diff(u, v, g)
    } else {
        pos_pow(u, g) - pos_pow(v, g)
    }
}

/// The kernel at `x = anchor + offset`. Differences against the singular
/// points are formed from `anchor` first, so they stay exact when `anchor` is
/// one of them.
pub(crate) fn kernel_at(t: f64, g: f64, a: f64, b: f64, anchor: f64, offset: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let mut v = 0.0;
    if a != 0.0 {
        v += a * half_kernel((t - anchor) - offset, -anchor - offset, g);
    }
    if b != 0.0 {
        // (t-x)_- = (x-t)_+ and (-x)_- = x_+
        v += b * half_kernel((anchor - t) + offset, anchor + offset, g);
    }
    v
}

/// `a((t-x)_+^γ - (-x)_+^γ) + b((t-x)_-^γ - (-x)_-^γ)`. Singular points
/// evaluate to a signed infinity.
pub(crate) fn kernel_value(t: f64, x: f64, g: f64, a: f64, b: f64) -> f64 {
    kernel_at(t, g, a, b, x, 0.0)
}

/// `∫_lo^hi |f|^p` (or `∫ f^{<p>}` when `signed`) for the kernel, with every
/// panel integrated by offset from its nearer end.
#[allow(clippy::too_many_arguments)]
pub(crate) fn kernel_power_integral(t: f64, g: f64, a: f64, b: f64, p: f64, signed: bool, lo: f64, hi: f64) -> Result<f64> {
    if t == 0.0 || !(lo < hi) {
        return Ok(0.0);
    }
    let mut pts = vec![lo];
    let mut inner: Vec<f64> = [0.0, t].into_iter().filter(|&c| c > lo && c < hi).collect();
    inner.sort_by(f64::total_cmp);
    pts.extend(inner);
    pts.push(hi);
    let power = |v: f64| {
        let m = v.abs().powf(p);
        if signed {
            m.copysign(v)
        } else {
            m
        }
    };
    let tol = Tolerance::new(1e-13 * (hi - lo), 1e-11);
    let mut total = 0.0;
    for w in pts.windows(2) {
        let half = 0.5 * (w[1] - w[0]);
        let (l, r) = (w[0], w[1]);
        total += quad::integrate_anchored(&|o: f64| power(kernel_at(t, g, a, b, l, o)), half, tol)?.value;
        total += quad::integrate_anchored(&|o: f64| power(kernel_at(t, g, a, b, r, -o)), half, tol)?.value;
    }
    Ok(total)
}

/// The LFSM kernel `f_t^{a,b}(x)` with exponent `H - 1/α`.
pub fn lfsm_kernel_eval(t: f64, x: f64, hurst: f64, alpha: f64, a: f64, b: f64) -> Result<f64> {
    check_lfsm_params(hurst, alpha, a, b)?;
    Ok(kernel_value(t, x, hurst - 1.0 / alpha, a, b))
}

/// `∫_lo^hi ((t-x)_+^γ - (-x)_+^γ) dx` in closed form, for `γ > -1`.
fn half_kernel_integral(t: f64, g: f64, lo: f64, hi: f64) -> f64 {
    let p = g + 1.0;
    // ∫_lo^hi (c-x)_+^γ dx = ((c-lo)_+^p - (c-hi)_+^p)/p; group by endpoint
    let at = |y: f64| {
        let (u, v) = (t - y, -y);
        if u > 0.0 && v > 0.0 {
            pow_diff(u, v, p)
        } else {
            u.max(0.0).powf(p) - v.max(0.0).powf(p)
        }
    };
    (at(lo) - at(hi)) / p
}

/// `∫_lo^hi f_t^{a,b}(x) dx` with exponent `γ > -1`.
pub(crate) fn kernel_interval_integral(t: f64, g: f64, a: f64, b: f64, lo: f64, hi: f64) -> Result<f64> {
    if t == 0.0 || !(lo < hi) {
        return Ok(0.0);
    }
    if !(g > -1.0) {
        return Err(Error::param(format!("kernel exponent {g} is not locally integrable")));
    }
    let dist = [0.0, t]
        .iter()
        .map(|&c| if c < lo { lo - c } else if c > hi { c - hi } else { 0.0 })
        .fold(f64::INFINITY, f64::min);
    if hi - lo < 0.5 * dist {
        // narrow cell far from the singular points: the integrand is smooth there
        let f = |x: f64| kernel_value(t, x, g, a, b);
        return Ok(quad::integrate(&f, lo, hi, Tolerance::new(0.0, 1e-13))
            .or_else(|_| quad::integrate(&f, lo, hi, Tolerance::new(1e-300, 1e-10)))?
            .value);
    }
    let mut v = 0.0;
    if a != 0.0 {
        v += a * half_kernel_integral(t, g, lo, hi);
    }
    if b != 0.0 {
        v += b * half_kernel_integral(-t, g, -hi, -lo);
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ind(lo: f64, hi: f64) -> FunctionSpec {
        FunctionSpec::indicator(lo, hi)
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(FracKernel::new(0.5, 1.0, 0.0).unwrap().eval(-4.0).unwrap(), 0.5);
        assert_eq!(FracKernel::new(0.5, 1.0, 0.0).unwrap().eval(4.0).unwrap(), 0.0);
        assert!((FracKernel::new(0.25, 1.0, 2.0).unwrap().eval(16.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(FracKernel::new(0.5, 1.0, 1.0).unwrap().eval(0.0), Err(Error::Singularity { .. })));
        assert!(FracKernel::new(0.5, 0.0, 0.0).is_err());
        assert!(FracKernel::new(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn rl_integral_of_indicator() {
        let v = rl_integral(&ind(0.0, 1.0), 0.5, Side::Plus, 1.0).unwrap();
        assert!((v - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-9);
        assert_eq!(rl_integral(&ind(0.0, 1.0), 0.5, Side::Plus, 0.0).unwrap(), 0.0);
        // closed form (x^δ - (x-1)_+^δ)/Γ(δ+1)
        for &x in &[0.3f64, 1.7, 4.0] {
            let d: f64 = 0.35;
            let want = (x.powf(d) - (x - 1.0f64).max(0.0).powf(d)) / libm::tgamma(d + 1.0);
            let got = rl_integral(&ind(0.0, 1.0), d, Side::Plus, x).unwrap();
            assert!((got - want).abs() < 1e-9, "{x}: {got} vs {want}");
            let mirror = rl_integral(&ind(-1.0, 0.0), d, Side::Minus, -x).unwrap();
            assert!((mirror - want).abs() < 1e-9);
        }
    }

    #[test]
    fn cauchy_consistency() {
        let g = FunctionSpec::gauss(0.2, 0.8);
        for &x in &[-1.0, 0.0, 0.9, 2.5] {
            let want = 0.8 * (std::f64::consts::PI / 2.0).sqrt() * libm::erfc(-(x - 0.2) / (0.8 * std::f64::consts::SQRT_2));
            let got = rl_integral(&g, 1.0, Side::Plus, x).unwrap();
            assert!((got - want).abs() < 1e-8, "{x}: {got} vs {want}");
        }
    }

    #[test]
    fn derivative_of_zero_and_of_non_smooth() {
        assert_eq!(rl_derivative(&FunctionSpec::zero(1), 0.4, Side::Plus, 0.3).unwrap(), 0.0);
        assert!(matches!(rl_derivative(&ind(0.0, 1.0), 0.4, Side::Plus, 0.3), Err(Error::Unsupported(_))));
        assert!(matches!(
            marchaud_derivative(&ind(0.0, 1.0), 0.4, Side::Plus, 0.3),
            Err(Error::Unsupported(_))
        ));
    }

    struct Constant(f64);
    impl RealFn for Constant {
        fn value(&self, _x: f64) -> f64 {
            self.0
        }
        fn derivative(&self, _x: f64) -> Option<f64> {
            Some(0.0)
        }
        fn is_smooth(&self) -> bool {
            true
        }
        fn breakpoints(&self) -> Vec<f64> {
            Vec::new()
        }
        fn extent(&self) -> (f64, f64) {
            (-1.0, 1.0)
        }
    }

    #[test]
    fn marchaud_of_constant_vanishes() {
        let v = marchaud_derivative(&Constant(3.0), 0.4, Side::Plus, 0.7).unwrap();
        assert!(v.abs() < 1e-9, "{v}");
    }

    #[test]
    fn marchaud_matches_rl_derivative() {
        let g = FunctionSpec::gauss(0.0, 1.0);
        for &(beta, x, tol) in &[(0.3, 0.0, 1e-6), (0.7, 1.0, 1e-5), (0.5, -0.4, 1e-6)] {
            for side in [Side::Plus, Side::Minus] {
                let m = marchaud_derivative(&g, beta, side, x).unwrap();
                let r = rl_derivative(&g, beta, side, x).unwrap();
                assert!((m - r).abs() < tol, "β={beta} x={x} {side:?}: {m} vs {r}");
            }
        }
    }

    #[test]
    fn inversion_at_a_point() {
        let g = FunctionSpec::gauss(0.0, 1.0);
        for side in [Side::Plus, Side::Minus] {
            let i = RlIntegralFn::new(&g, 0.5, side).unwrap();
            let back = rl_derivative(&i, 0.5, side, 0.7).unwrap();
            assert!((back - g.value(0.7)).abs() < 1e-6, "{side:?}: {back}");
        }
    }

    #[test]
    fn convolution_examples() {
        let f = ind(0.0, 1.0);
        let grid = GridFunction::template(-1.0, 1.5, 2).unwrap();
        let right = convolve_kernel(&f, &FracKernel::new(0.5, 0.0, 1.0).unwrap(), &grid).unwrap();
        assert_eq!(right.values[0], 0.0);
        assert!((right.values[1] - 2.0 * 0.5f64.sqrt()).abs() < 1e-10);
        let left = convolve_kernel(&f, &FracKernel::new(0.5, 1.0, 0.0).unwrap(), &grid).unwrap();
        assert!((left.values[1] - 2.0 * 0.5f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn indicator_closed_form_matches_quadrature() {
        let f = ind(0.0, 1.0);
        for &(beta, a, b) in &[(0.3, 1.0, 0.0), (0.5, 0.0, 1.0), (0.7, 1.0, 1.0)] {
            let k = FracKernel::new(beta, a, b).unwrap();
            for i in 0..25 {
                let x = -2.0 + 0.17 * i as f64;
                let num = k.convolve_at(&f, x).unwrap();
                let exact = k.indicator_convolution(1.0, x);
                assert!((num - exact).abs() < 1e-8, "β={beta} x={x}: {num} vs {exact}");
            }
        }
    }

    #[test]
    fn lfsm_kernel_examples() {
        assert_eq!(lfsm_kernel_eval(1.0, 2.0, 0.7, 2.0, 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(lfsm_kernel_eval(0.0, 0.3, 0.7, 2.0, 1.0, 1.0).unwrap(), 0.0);
        let v = lfsm_kernel_eval(1.0, 0.5, 0.75, 2.0, 1.0, 0.0).unwrap();
        assert!((v - 0.5f64.powf(0.25)).abs() < 1e-15);
        assert!(lfsm_kernel_eval(1.0, 0.5, 0.5, 2.0, 1.0, 0.0).is_err());
        // singular points of the anti-persistent kernel
        assert_eq!(lfsm_kernel_eval(1.0, 1.0, 0.4, 1.5, 1.0, 0.0).unwrap(), f64::INFINITY);
        assert_eq!(lfsm_kernel_eval(1.0, 0.0, 0.4, 1.5, 1.0, 0.0).unwrap(), f64::NEG_INFINITY);
        // b side mirrors the a side
        let l = lfsm_kernel_eval(1.0, -0.3, 0.7, 1.5, 1.0, 0.0).unwrap();
        let r = lfsm_kernel_eval(-1.0, 0.3, 0.7, 1.5, 0.0, 1.0).unwrap();
        assert!((l - r).abs() < 1e-15);
    }

    #[test]
    fn far_field_kernel_is_accurate() {
        // (1+y)^γ - y^γ ≈ γ y^{γ-1}(1 + (γ-1)/(2y)) for large y
        let g: f64 = 0.7 - 1.0 / 1.5;
        let y = 1e8;
        let v = kernel_value(1.0, -y, g, 1.0, 0.0);
        let approx = g * y.powf(g - 1.0) * (1.0 + (g - 1.0) / (2.0 * y));
        assert!((v - approx).abs() < 1e-12 * approx, "{v} vs {approx}");
    }

    #[test]
    fn kernel_power_integrals_near_strong_singularities() {
        // H = 0.1, α = 1.5: |f|^α ~ |x-1|^{-0.85} near x = 1
        let g = 0.1 - 1.0 / 1.5;
        let v = kernel_power_integral(1.0, g, 1.0, 0.0, 1.5, false, 0.5, 1.5).unwrap();
        // oracle: integrate (1-x)^{γα} exactly and the remainder numerically
        let e = g * 1.5;
        let sing = 0.5f64.powf(e + 1.0) / (e + 1.0);
        let rest = |x: f64| {
            let k = kernel_value(1.0, x, g, 1.0, 0.0);
            k.abs().powf(1.5) - (1.0 - x).powf(e)
        };
        let r = quad::integrate(&rest, 0.5, 1.0, Tolerance::new(1e-12, 1e-12)).unwrap().value;
        assert!((v - sing - r).abs() < 1e-9 * v, "{v} vs {}", sing + r);
    }

    #[test]
    fn kernel_cell_integrals_match_quadrature() {
        for &(h, alpha) in &[(0.7, 1.5), (0.4, 1.5), (0.9, 1.2)] {
            let g = h - 1.0 / alpha;
            for &(lo, hi) in &[(-3.0, -2.0), (-0.5, 0.25), (0.0, 1.0), (0.9, 1.3), (-1e6, -1e6 + 0.01), (-40.0, 80.0)] {
                let exact = kernel_interval_integral(1.0, g, 1.0, 0.6, lo, hi).unwrap();
                let f = |x: f64| kernel_value(1.0, x, g, 1.0, 0.6);
                let num = quad::integrate_split(&f, lo, hi, &[0.0, 1.0], Tolerance::new(1e-12, 1e-12), true).unwrap().value;
                assert!((exact - num).abs() < 1e-10 * (1.0 + num.abs()), "{lo},{hi}: {exact} vs {num}");
            }
        }
    }
}
