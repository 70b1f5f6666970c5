//! Symbolic integrands on R^d (d ∈ {1, 2}) with cell integrals, `L^p` norms
//! and truncation windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frac;
use crate::quad::{self, Tolerance};

/// Axis-aligned half-open box `[lo, hi)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        debug_assert_eq!(lo.len(), hi.len());
        Bounds { lo, hi }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Bounds::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| !(l < h))
    }

    pub fn volume(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn intersect(&self, other: &Bounds) -> Bounds {
        Bounds {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect(),
        }
    }

    /// Smallest box holding both.
    pub fn hull(&self, other: &Bounds) -> Bounds {
        if self.is_empty() {
            return other.clone();
        }
        if other.is_empty() {
            return self.clone();
        }
        Bounds {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
        }
    }

    pub fn shifted(&self, by: &[f64]) -> Bounds {
        Bounds {
            lo: self.lo.iter().zip(by).map(|(a, s)| a + s).collect(),
            hi: self.hi.iter().zip(by).map(|(a, s)| a + s).collect(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| l <= v && v < h)
    }
}

/// Lattice cell `h·(k + [0,1)^d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub index: Vec<i64>,
    pub h: f64,
}

impl Cell {
    pub fn new(index: Vec<i64>, h: f64) -> Self {
        Cell { index, h }
    }

    pub fn bounds(&self) -> Bounds {
        Bounds {
            lo: self.index.iter().map(|&k| k as f64 * self.h).collect(),
            hi: self.index.iter().map(|&k| (k + 1) as f64 * self.h).collect(),
        }
    }
}

fn numeric_tol(b: &Bounds) -> Tolerance {
    Tolerance::new(1e-10 * b.volume().max(1e-300), 1e-10)
}

/// Anything the lattice can discretize: pointwise values plus box integrals of
/// `f`, `|f|^p` and `f^{<p>} = sign(f)|f|^p`.
///
/// The provided box methods integrate numerically, splitting at
/// [`Integrand::breakpoints`]; implementors override them with closed forms
/// where available.
pub trait Integrand: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> f64;

    /// Coordinates along `axis` where `f` may jump, kink or blow up.
    fn breakpoints(&self, axis: usize) -> Vec<f64>;

    /// Bounding box of the support, when compact.
    fn support(&self) -> Option<Bounds>;

    /// Box holding the bulk of the mass; the tail search starts here.
    fn core_box(&self) -> Bounds;

    fn is_zero(&self) -> bool {
        false
    }

    fn box_integral(&self, b: &Bounds) -> Result<f64> {
        numeric_box(self, &|v| v, b, numeric_tol(b))
    }

    fn abs_power_integral(&self, p: f64, b: &Bounds) -> Result<f64> {
        numeric_box(self, &|v: f64| v.abs().powf(p), b, numeric_tol(b))
    }

    fn signed_power_integral(&self, p: f64, b: &Bounds) -> Result<f64> {
        numeric_box(self, &|v: f64| v.signum() * v.abs().powf(p), b, numeric_tol(b))
    }
}

/// `∫_b g(f(x)) dx` by (nested) adaptive quadrature.
pub fn numeric_box<I: Integrand + ?Sized>(f: &I, g: &(dyn Fn(f64) -> f64 + Sync), b: &Bounds, tol: Tolerance) -> Result<f64> {
    if b.is_empty() {
        return Ok(0.0);
    }
    match f.dim() {
        1 => {
            let h = |x: f64| g(f.eval(&[x]));
            Ok(quad::integrate_split(&h, b.lo[0], b.hi[0], &f.breakpoints(0), tol, true)?.value)
        }
        2 => {
            let br0 = f.breakpoints(0);
            let br1 = f.breakpoints(1);
            let w0 = b.hi[0] - b.lo[0];
            let inner_tol = Tolerance::new(0.1 * tol.abs / w0, tol.rel * 0.1);
            let outer = |x0: f64| {
                let h = |x1: f64| g(f.eval(&[x0, x1]));
                match quad::integrate_split(&h, b.lo[1], b.hi[1], &br1, inner_tol, true) {
                    Ok(e) => e.value,
                    Err(_) => f64::NAN,
                }
            };
            Ok(quad::integrate_split(&outer, b.lo[0], b.hi[0], &br0, tol, true)?.value)
        }
        d => Err(Error::param(format!("dimension {d} is not supported"))),
    }
}

/// One term `coeff · spec` of a linear combination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub spec: FunctionSpec,
}

/// Symbolic integrand descriptor.
///
/// Serialized as JSON with a `"type"` discriminator, e.g.
/// `{"type":"indicator_box","lower":[0],"upper":[1]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FunctionSpec {
    /// `1{lower ≤ x < upper}` componentwise.
    IndicatorBox { lower: Vec<f64>, upper: Vec<f64> },
    /// `exp(-|x - center|² / (2 width²))`.
    GaussBump { center: Vec<f64>, width: f64 },
    /// One-dimensional `1` for `|x| < cutoff`, `min(1, |x|^{-delta})` beyond.
    PowerTail { delta: f64, cutoff: f64 },
    /// One-dimensional LFSM kernel `f_t^{a,b}` with exponent `hurst - 1/alpha`.
    LfsmKernel { t: f64, hurst: f64, alpha: f64, a: f64, b: f64 },
    LinearCombination { terms: Vec<Term> },
    /// `x ↦ inner(x - offset)`.
    Shift { offset: Vec<f64>, inner: Box<FunctionSpec> },
    /// `x ↦ factor · inner(x)`.
    Scale { factor: f64, inner: Box<FunctionSpec> },
}

impl FunctionSpec {
    pub fn indicator(lower: f64, upper: f64) -> Self {
        FunctionSpec::IndicatorBox {
            lower: vec![lower],
            upper: vec![upper],
        }
    }

    pub fn gauss(center: f64, width: f64) -> Self {
        FunctionSpec::GaussBump {
            center: vec![center],
            width,
        }
    }

    pub fn combination(terms: impl IntoIterator<Item = (f64, FunctionSpec)>) -> Self {
        FunctionSpec::LinearCombination {
            terms: terms.into_iter().map(|(coeff, spec)| Term { coeff, spec }).collect(),
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        FunctionSpec::Scale {
            factor,
            inner: Box::new(self),
        }
    }

    pub fn shifted(self, offset: Vec<f64>) -> Self {
        FunctionSpec::Shift {
            offset,
            inner: Box::new(self),
        }
    }

    /// The zero function on R^d.
    pub fn zero(dim: usize) -> Self {
        FunctionSpec::combination([(
            0.0,
            FunctionSpec::IndicatorBox {
                lower: vec![0.0; dim],
                upper: vec![1.0; dim],
            },
        )])
    }

    /// Checks every node and returns the common dimension.
    pub fn validate(&self) -> Result<usize> {
        let d = match self {
            FunctionSpec::IndicatorBox { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(Error::DimensionMismatch {
                        expected: lower.len(),
                        got: upper.len(),
                    });
                }
                if lower.iter().chain(upper).any(|v| !v.is_finite()) {
                    return Err(Error::param("indicator box corners must be finite"));
                }
                lower.len()
            }
            FunctionSpec::GaussBump { center, width } => {
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(Error::param(format!("bump width must be positive, got {width}")));
                }
                if center.iter().any(|v| !v.is_finite()) {
                    return Err(Error::param("bump center must be finite"));
                }
                center.len()
            }
            FunctionSpec::PowerTail { delta, cutoff } => {
                if !(*delta > 0.0 && *cutoff > 0.0 && delta.is_finite() && cutoff.is_finite()) {
                    return Err(Error::param("power tail needs delta > 0 and cutoff > 0"));
                }
                1
            }
            FunctionSpec::LfsmKernel { t, hurst, alpha, a, b } => {
                frac::check_lfsm_params(*hurst, *alpha, *a, *b)?;
                if !t.is_finite() {
                    return Err(Error::param("kernel time must be finite"));
                }
                1
            }
            FunctionSpec::LinearCombination { terms } => {
                let first = terms
                    .first()
                    .ok_or_else(|| Error::param("linear combination needs at least one term"))?;
                let d = first.spec.validate()?;
                for t in terms {
                    if !t.coeff.is_finite() {
                        return Err(Error::param("combination coefficients must be finite"));
                    }
                    let e = t.spec.validate()?;
                    if e != d {
                        return Err(Error::DimensionMismatch { expected: d, got: e });
                    }
                }
                d
            }
            FunctionSpec::Shift { offset, inner } => {
                let d = inner.validate()?;
                if offset.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: offset.len(),
                    });
                }
                if offset.iter().any(|v| !v.is_finite()) {
                    return Err(Error::param("shift must be finite"));
                }
                d
            }
            FunctionSpec::Scale { factor, inner } => {
                if !(factor.is_finite() && *factor != 0.0) {
                    return Err(Error::param(format!("scale factor must be finite and non-zero, got {factor}")));
                }
                inner.validate()?
            }
        };
        if d == 0 || d > 2 {
            return Err(Error::param(format!("dimension must be 1 or 2, got {d}")));
        }
        Ok(d)
    }

    /// Checked pointwise evaluation.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        Ok(self.eval(x))
    }

    /// `∫_{h(k+[0,1)^d)} f`.
    pub fn cell_integral(&self, cell: &Cell) -> Result<f64> {
        if cell.index.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: cell.index.len(),
            });
        }
        if !(cell.h > 0.0) {
            return Err(Error::param(format!("cell spacing must be positive, got {}", cell.h)));
        }
        self.box_integral(&cell.bounds())
    }

    /// Every `alpha` carried by LFSM kernel leaves.
    pub fn kernel_alphas(&self) -> Vec<f64> {
        match self {
            FunctionSpec::LfsmKernel { alpha, .. } => vec![*alpha],
            FunctionSpec::LinearCombination { terms } => terms.iter().flat_map(|t| t.spec.kernel_alphas()).collect(),
            FunctionSpec::Shift { inner, .. } | FunctionSpec::Scale { inner, .. } => inner.kernel_alphas(),
            _ => Vec::new(),
        }
    }

    /// True when `f` is C¹ everywhere (derivative available through [`FunctionSpec::derivative`]).
    pub fn is_smooth(&self) -> bool {
        match self {
            FunctionSpec::GaussBump { .. } => true,
            FunctionSpec::LinearCombination { terms } => terms.iter().all(|t| t.coeff == 0.0 || t.spec.is_smooth()),
            FunctionSpec::Shift { inner, .. } | FunctionSpec::Scale { inner, .. } => inner.is_smooth(),
            _ => false,
        }
    }

    /// `f'(x)` for smooth one-dimensional specs.
    pub fn derivative(&self, x: f64) -> Option<f64> {
        match self {
            FunctionSpec::GaussBump { center, width } if center.len() == 1 => {
                let u = (x - center[0]) / width;
                Some(-u / width * (-0.5 * u * u).exp())
            }
            FunctionSpec::LinearCombination { terms } => {
                let mut s = 0.0;
                for t in terms.iter().filter(|t| t.coeff != 0.0) {
                    s += t.coeff * t.spec.derivative(x)?;
                }
                Some(s)
            }
            FunctionSpec::Shift { offset, inner } => inner.derivative(x - offset[0]),
            FunctionSpec::Scale { factor, inner } => inner.derivative(x).map(|v| factor * v),
            _ => None,
        }
    }
}

fn gauss_interval(center: f64, width: f64, lo: f64, hi: f64) -> f64 {
    if !(lo < hi) {
        return 0.0;
    }
    let s = width * std::f64::consts::SQRT_2;
    let (a, b) = ((lo - center) / s, (hi - center) / s);
    // use the complementary function on the far side to avoid cancellation
    let diff = if a >= 0.0 {
        libm::erfc(a) - libm::erfc(b)
    } else if b <= 0.0 {
        libm::erfc(-b) - libm::erfc(-a)
    } else {
        libm::erf(b) - libm::erf(a)
    };
    width * (std::f64::consts::PI / 2.0).sqrt() * diff
}

/// `∫_0^x` of the power-tail profile for `x ≥ 0`.
fn power_tail_primitive(delta: f64, cutoff: f64, x: f64) -> f64 {
    let m = cutoff.max(1.0);
    // for cutoff > 1 the profile drops from 1 to cutoff^{-delta} at the cutoff
    if x <= m {
        return x;
    }
    if (delta - 1.0).abs() < 1e-12 {
        m + (x / m).ln()
    } else {
        m + (x.powf(1.0 - delta) - m.powf(1.0 - delta)) / (1.0 - delta)
    }
}

fn power_tail_value(delta: f64, cutoff: f64, x: f64) -> f64 {
    let ax = x.abs();
    if ax < cutoff {
        1.0
    } else {
        ax.powf(-delta).min(1.0)
    }
}

fn odd_primitive(delta: f64, cutoff: f64, x: f64) -> f64 {
    if x >= 0.0 {
        power_tail_primitive(delta, cutoff, x)
    } else {
        -power_tail_primitive(delta, cutoff, -x)
    }
}

impl Integrand for FunctionSpec {
    fn dim(&self) -> usize {
        match self {
            FunctionSpec::IndicatorBox { lower, .. } => lower.len(),
            FunctionSpec::GaussBump { center, .. } => center.len(),
            FunctionSpec::PowerTail { .. } | FunctionSpec::LfsmKernel { .. } => 1,
            FunctionSpec::LinearCombination { terms } => terms.first().map_or(1, |t| t.spec.dim()),
            FunctionSpec::Shift { offset, .. } => offset.len(),
            FunctionSpec::Scale { inner, .. } => inner.dim(),
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            FunctionSpec::IndicatorBox { lower, upper } => {
                let inside = x.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| l <= v && v < u);
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
            FunctionSpec::GaussBump { center, width } => {
                let r2: f64 = x.iter().zip(center).map(|(v, c)| (v - c) * (v - c)).sum();
                (-0.5 * r2 / (width * width)).exp()
            }
            FunctionSpec::PowerTail { delta, cutoff } => power_tail_value(*delta, *cutoff, x[0]),
            FunctionSpec::LfsmKernel { t, hurst, alpha, a, b } => frac::kernel_value(*t, x[0], *hurst - 1.0 / alpha, *a, *b),
            FunctionSpec::LinearCombination { terms } => terms
                .iter()
                .filter(|t| t.coeff != 0.0)
                .map(|t| t.coeff * t.spec.eval(x))
                .sum(),
            FunctionSpec::Shift { offset, inner } => {
                let y: Vec<f64> = x.iter().zip(offset).map(|(v, o)| v - o).collect();
                inner.eval(&y)
            }
            FunctionSpec::Scale { factor, inner } => factor * inner.eval(x),
        }
    }

    fn breakpoints(&self, axis: usize) -> Vec<f64> {
        match self {
            FunctionSpec::IndicatorBox { lower, upper } => vec![lower[axis], upper[axis]],
            FunctionSpec::GaussBump { center, .. } => vec![center[axis]],
            FunctionSpec::PowerTail { cutoff, .. } => {
                let m = cutoff.max(1.0);
                vec![-m, -cutoff, 0.0, *cutoff, m]
            }
            FunctionSpec::LfsmKernel { t, .. } => vec![0.0, *t],
            FunctionSpec::LinearCombination { terms } => terms
                .iter()
                .filter(|t| t.coeff != 0.0)
                .flat_map(|t| t.spec.breakpoints(axis))
                .collect(),
            FunctionSpec::Shift { offset, inner } => inner.breakpoints(axis).into_iter().map(|p| p + offset[axis]).collect(),
            FunctionSpec::Scale { inner, .. } => inner.breakpoints(axis),
        }
    }

    fn support(&self) -> Option<Bounds> {
        match self {
            FunctionSpec::IndicatorBox { lower, upper } => Some(Bounds::new(lower.clone(), upper.clone())),
            FunctionSpec::GaussBump { .. } | FunctionSpec::PowerTail { .. } => None,
            FunctionSpec::LfsmKernel { t, .. } => {
                if *t == 0.0 {
                    Some(Bounds::interval(0.0, 0.0))
                } else {
                    None
                }
            }
            FunctionSpec::LinearCombination { terms } => {
                let mut hull = Bounds::new(vec![0.0; self.dim()], vec![0.0; self.dim()]);
                for t in terms.iter().filter(|t| t.coeff != 0.0) {
                    hull = hull.hull(&t.spec.support()?);
                }
                Some(hull)
            }
            FunctionSpec::Shift { offset, inner } => inner.support().map(|b| b.shifted(offset)),
            FunctionSpec::Scale { inner, .. } => inner.support(),
        }
    }

    fn core_box(&self) -> Bounds {
        match self {
            FunctionSpec::IndicatorBox { lower, upper } => Bounds::new(lower.clone(), upper.clone()),
            FunctionSpec::GaussBump { center, width } => Bounds::new(
                center.iter().map(|c| c - 3.0 * width).collect(),
                center.iter().map(|c| c + 3.0 * width).collect(),
            ),
            FunctionSpec::PowerTail { cutoff, .. } => {
                let m = cutoff.max(1.0);
                Bounds::interval(-m, m)
            }
            FunctionSpec::LfsmKernel { t, .. } => {
                let s = if *t == 0.0 { 1.0 } else { t.abs() };
                Bounds::interval(t.min(0.0) - s, t.max(0.0) + s)
            }
            FunctionSpec::LinearCombination { terms } => {
                let d = self.dim();
                let mut hull = Bounds::new(vec![0.0; d], vec![0.0; d]);
                for t in terms.iter().filter(|t| t.coeff != 0.0) {
                    hull = hull.hull(&t.spec.core_box());
                }
                if hull.is_empty() {
                    Bounds::new(vec![0.0; d], vec![1.0; d])
                } else {
                    hull
                }
            }
            FunctionSpec::Shift { offset, inner } => inner.core_box().shifted(offset),
            FunctionSpec::Scale { inner, .. } => inner.core_box(),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            FunctionSpec::IndicatorBox { lower, upper } => Bounds::new(lower.clone(), upper.clone()).is_empty(),
            FunctionSpec::LfsmKernel { t, a, b, .. } => *t == 0.0 || (*a == 0.0 && *b == 0.0),
            FunctionSpec::LinearCombination { terms } => terms.iter().all(|t| t.coeff == 0.0 || t.spec.is_zero()),
            FunctionSpec::Shift { inner, .. } | FunctionSpec::Scale { inner, .. } => inner.is_zero(),
            _ => false,
        }
    }

    fn box_integral(&self, b: &Bounds) -> Result<f64> {
        if b.is_empty() {
            return Ok(0.0);
        }
        Ok(match self {
            FunctionSpec::IndicatorBox { lower, upper } => Bounds::new(lower.clone(), upper.clone()).intersect(b).volume(),
            FunctionSpec::GaussBump { center, width } => center
                .iter()
                .enumerate()
                .map(|(i, c)| gauss_interval(*c, *width, b.lo[i], b.hi[i]))
                .product(),
            FunctionSpec::PowerTail { delta, cutoff } => {
                odd_primitive(*delta, *cutoff, b.hi[0]) - odd_primitive(*delta, *cutoff, b.lo[0])
            }
            FunctionSpec::LfsmKernel { t, hurst, alpha, a, b: bw } => {
                frac::kernel_interval_integral(*t, *hurst - 1.0 / alpha, *a, *bw, b.lo[0], b.hi[0])?
            }
            FunctionSpec::LinearCombination { terms } => {
                let mut s = 0.0;
                for t in terms.iter().filter(|t| t.coeff != 0.0) {
                    s += t.coeff * t.spec.box_integral(b)?;
                }
                s
            }
            FunctionSpec::Shift { offset, inner } => {
                let neg: Vec<f64> = offset.iter().map(|o| -o).collect();
                inner.box_integral(&b.shifted(&neg))?
            }
            FunctionSpec::Scale { factor, inner } => factor * inner.box_integral(b)?,
        })
    }

    fn abs_power_integral(&self, p: f64, b: &Bounds) -> Result<f64> {
        if b.is_empty() {
            return Ok(0.0);
        }
        match self {
            FunctionSpec::IndicatorBox { .. } => self.box_integral(b),
            FunctionSpec::GaussBump { center, width } => FunctionSpec::GaussBump {
                center: center.clone(),
                width: width / p.sqrt(),
            }
            .box_integral(b),
            FunctionSpec::PowerTail { delta, cutoff } => FunctionSpec::PowerTail {
                delta: delta * p,
                cutoff: *cutoff,
            }
            .box_integral(b),
            FunctionSpec::Shift { offset, inner } => {
                let neg: Vec<f64> = offset.iter().map(|o| -o).collect();
                inner.abs_power_integral(p, &b.shifted(&neg))
            }
            FunctionSpec::Scale { factor, inner } => Ok(factor.abs().powf(p) * inner.abs_power_integral(p, b)?),
            FunctionSpec::LinearCombination { terms } => {
                let live: Vec<&Term> = terms.iter().filter(|t| t.coeff != 0.0 && !t.spec.is_zero()).collect();
                match live.as_slice() {
                    [] => Ok(0.0),
                    [t] => Ok(t.coeff.abs().powf(p) * t.spec.abs_power_integral(p, b)?),
                    _ => numeric_box(self, &|v: f64| v.abs().powf(p), b, numeric_tol(b)),
                }
            }
            FunctionSpec::LfsmKernel { t, hurst, alpha, a, b: bw } => {
                frac::kernel_power_integral(*t, *hurst - 1.0 / alpha, *a, *bw, p, false, b.lo[0], b.hi[0])
            }
        }
    }

    fn signed_power_integral(&self, p: f64, b: &Bounds) -> Result<f64> {
        match self {
            FunctionSpec::IndicatorBox { .. } | FunctionSpec::GaussBump { .. } | FunctionSpec::PowerTail { .. } => {
                self.abs_power_integral(p, b)
            }
            FunctionSpec::Shift { offset, inner } => {
                let neg: Vec<f64> = offset.iter().map(|o| -o).collect();
                inner.signed_power_integral(p, &b.shifted(&neg))
            }
            FunctionSpec::Scale { factor, inner } => {
                Ok(factor.signum() * factor.abs().powf(p) * inner.signed_power_integral(p, b)?)
            }
            FunctionSpec::LinearCombination { terms } => {
                let live: Vec<&Term> = terms.iter().filter(|t| t.coeff != 0.0 && !t.spec.is_zero()).collect();
                match live.as_slice() {
                    [] => Ok(0.0),
                    [t] => Ok(t.coeff.signum() * t.coeff.abs().powf(p) * t.spec.signed_power_integral(p, b)?),
                    _ => numeric_box(self, &|v: f64| v.signum() * v.abs().powf(p), b, numeric_tol(b)),
                }
            }
            FunctionSpec::LfsmKernel { t, hurst, alpha, a, b: bw } => {
                frac::kernel_power_integral(*t, *hurst - 1.0 / alpha, *a, *bw, p, true, b.lo[0], b.hi[0])
            }
        }
    }
}

/// Outcome of [`tail_window`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailWindow {
    /// `None` when the function vanishes identically.
    pub bounds: Option<Bounds>,
    /// `∫_W |f|^α`.
    pub inner_mass: f64,
    /// Estimate of `∫_{W^c} |f|^α` (zero for compact support).
    pub tail_mass: f64,
    pub doublings: usize,
}

impl TailWindow {
    pub fn total_mass(&self) -> f64 {
        self.inner_mass + self.tail_mass
    }
}

const MAX_DOUBLINGS: usize = 60;

#[derive(Clone, Copy, Debug)]
struct Side {
    extent: f64,
    last: Option<f64>,
    tail: f64,
    done: bool,
}

impl Side {
    fn new() -> Self {
        Side {
            extent: 0.0,
            last: None,
            tail: f64::INFINITY,
            done: false,
        }
    }

    /// Records the mass `delta` of the newest shell and updates the tail
    /// estimate, extrapolating geometrically from the last two shells.
    fn record(&mut self, delta: f64) {
        self.tail = match self.last {
            _ if delta == 0.0 => 0.0,
            Some(prev) if prev > 0.0 && delta < prev => {
                let q = delta / prev;
                delta * q / (1.0 - q)
            }
            _ => f64::INFINITY,
        };
        self.last = Some(delta);
    }

    fn settle(&mut self, delta: f64, mass: f64, budget: f64) {
        if delta <= 0.25 * budget * mass && self.tail <= budget * mass {
            self.done = true;
        }
    }
}

/// The four rectangles covering `outer \ inner` for nested 2-d boxes.
fn frame(inner: &Bounds, outer: &Bounds) -> [Bounds; 4] {
    [
        Bounds::new(vec![outer.lo[0], outer.lo[1]], vec![inner.lo[0], outer.hi[1]]),
        Bounds::new(vec![inner.hi[0], outer.lo[1]], vec![outer.hi[0], outer.hi[1]]),
        Bounds::new(vec![inner.lo[0], outer.lo[1]], vec![inner.hi[0], inner.lo[1]]),
        Bounds::new(vec![inner.lo[0], inner.hi[1]], vec![inner.hi[0], outer.hi[1]]),
    ]
}

/// Smallest extent `e ∈ [0, extent]` whose discarded shell mass `shell(e)`
/// stays within `spare`, by bisection. Returns `(e, shell(e))`.
fn trim(extent: f64, spare: f64, shell: impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    if !(spare > 0.0) || extent == 0.0 {
        return Ok((extent, 0.0));
    }
    let full = shell(0.0)?;
    if full <= spare {
        return Ok((0.0, full));
    }
    let (mut lo, mut hi, mut cut) = (0.0, extent, 0.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let m = shell(mid)?;
        if m <= spare {
            hi = mid;
            cut = m;
        } else {
            lo = mid;
        }
    }
    Ok((hi, cut))
}

/// Box `W` with `∫_{W^c}|f|^α ≤ tol · ∫|f|^α`.
///
/// Compactly supported functions return their support. Otherwise the core box
/// is grown by doubling its extent on each side until the newest shell adds
/// less than `tol/4` of the accumulated mass and the geometric extrapolation
/// of the remaining tail is within budget; the edges are then pulled back by
/// bisection as far as the budget allows.
pub fn tail_window<I: Integrand + ?Sized>(f: &I, alpha: f64, tol: f64) -> Result<TailWindow> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::param(format!("tail tolerance must lie in (0, 1), got {tol}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::param(format!("exponent must be positive, got {alpha}")));
    }
    let empty = TailWindow {
        bounds: None,
        inner_mass: 0.0,
        tail_mass: 0.0,
        doublings: 0,
    };
    if f.is_zero() {
        return Ok(empty);
    }
    if let Some(s) = f.support() {
        let mass = f.abs_power_integral(alpha, &s)?;
        if mass == 0.0 || s.is_empty() {
            return Ok(empty);
        }
        return Ok(TailWindow {
            bounds: Some(s),
            inner_mass: mass,
            tail_mass: 0.0,
            doublings: 0,
        });
    }
    let core = f.core_box();
    let mut mass = f.abs_power_integral(alpha, &core)?;
    match f.dim() {
        1 => {
            let (lo, hi) = (core.lo[0], core.hi[0]);
            let w0 = (hi - lo).max(f64::EPSILON * (1.0 + lo.abs() + hi.abs()));
            // each side gets half of the budget
            let budget = 0.5 * tol;
            let mut sides = [Side::new(), Side::new()];
            for it in 0..=MAX_DOUBLINGS {
                if sides.iter().all(|s| s.done) {
                    if mass == 0.0 {
                        return Ok(empty);
                    }
                    // doubling overshoots; pull each edge back while the budget allows
                    let total = mass + sides[0].tail + sides[1].tail;
                    let mut cuts = [0.0; 2];
                    for (i, side) in sides.iter_mut().enumerate() {
                        let spare = budget * total - side.tail;
                        let shell = |e: f64| {
                            if i == 0 {
                                Bounds::interval(lo - side.extent, lo - e)
                            } else {
                                Bounds::interval(hi + e, hi + side.extent)
                            }
                        };
                        let (e, cut) = trim(side.extent, spare, |e| f.abs_power_integral(alpha, &shell(e)))?;
                        side.extent = e;
                        side.tail += cut;
                        cuts[i] = cut;
                    }
                    mass -= cuts[0] + cuts[1];
                    let b = Bounds::interval(lo - sides[0].extent, hi + sides[1].extent);
                    let tail = sides[0].tail + sides[1].tail;
                    return Ok(TailWindow {
                        bounds: Some(b),
                        inner_mass: mass,
                        tail_mass: tail,
                        doublings: it,
                    });
                }
                if it == MAX_DOUBLINGS {
                    break;
                }
                let mut deltas = [0.0; 2];
                for (i, side) in sides.iter_mut().enumerate() {
                    if side.done {
                        continue;
                    }
                    let next = if side.extent == 0.0 { w0 } else { 2.0 * side.extent };
                    let shell = if i == 0 {
                        Bounds::interval(lo - next, lo - side.extent)
                    } else {
                        Bounds::interval(hi + side.extent, hi + next)
                    };
                    let delta = f.abs_power_integral(alpha, &shell)?;
                    side.extent = next;
                    side.record(delta);
                    deltas[i] = delta;
                    mass += delta;
                }
                for (i, side) in sides.iter_mut().enumerate() {
                    if !side.done {
                        side.settle(deltas[i], mass, budget);
                    }
                }
            }
            Err(Error::TailWindow {
                doublings: MAX_DOUBLINGS,
                alpha,
            })
        }
        2 => {
            let w0 = (0..2)
                .map(|i| core.hi[i] - core.lo[i])
                .fold(f64::INFINITY, f64::min)
                .max(f64::EPSILON);
            let mut side = Side::new();
            let grow = |e: f64| Bounds::new(core.lo.iter().map(|v| v - e).collect(), core.hi.iter().map(|v| v + e).collect());
            for it in 0..=MAX_DOUBLINGS {
                if side.done {
                    if mass == 0.0 {
                        return Ok(empty);
                    }
                    let spare = tol * (mass + side.tail) - side.tail;
                    let outer = grow(side.extent);
                    let (e, cut) = trim(side.extent, spare, |e| {
                        let inner = grow(e);
                        let mut m = 0.0;
                        for s in &frame(&inner, &outer) {
                            m += f.abs_power_integral(alpha, s)?;
                        }
                        Ok(m)
                    })?;
                    side.extent = e;
                    side.tail += cut;
                    mass -= cut;
                    return Ok(TailWindow {
                        bounds: Some(grow(side.extent)),
                        inner_mass: mass,
                        tail_mass: side.tail,
                        doublings: it,
                    });
                }
                if it == MAX_DOUBLINGS {
                    break;
                }
                let next = if side.extent == 0.0 { w0 } else { 2.0 * side.extent };
                let inner = grow(side.extent);
                let outer = grow(next);
                let mut delta = 0.0;
                for s in &frame(&inner, &outer) {
                    delta += f.abs_power_integral(alpha, s)?;
                }
                side.extent = next;
                side.record(delta);
                mass += delta;
                side.settle(delta, mass, tol);
            }
            Err(Error::TailWindow {
                doublings: MAX_DOUBLINGS,
                alpha,
            })
        }
        d => Err(Error::param(format!("dimension {d} is not supported"))),
    }
}

/// Integration window for [`lp_norm`].
#[derive(Clone, Debug, PartialEq)]
pub enum Window {
    /// Whole space: the window comes from [`tail_window`] and the estimated
    /// tail mass is added back.
    Auto,
    Fixed(Bounds),
}

/// Tail tolerance used by [`Window::Auto`].
pub const AUTO_TAIL_TOL: f64 = 1e-9;

/// `(∫_W |f|^p)^{1/p}`.
pub fn lp_norm<I: Integrand + ?Sized>(f: &I, p: f64, window: &Window) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::param(format!("norm exponent must be positive, got {p}")));
    }
    let mass = match window {
        Window::Fixed(b) => {
            if b.dim() != f.dim() {
                return Err(Error::DimensionMismatch {
                    expected: f.dim(),
                    got: b.dim(),
                });
            }
            f.abs_power_integral(p, b)?
        }
        Window::Auto => tail_window(f, p, AUTO_TAIL_TOL)?.total_mass(),
    };
    Ok(mass.max(0.0).powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ind() -> FunctionSpec {
        FunctionSpec::indicator(0.0, 1.0)
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(ind().evaluate(&[0.5]).unwrap(), 1.0);
        assert_eq!(ind().evaluate(&[1.0]).unwrap(), 0.0);
        let combo = FunctionSpec::combination([(2.0, ind()), (-1.0, FunctionSpec::indicator(0.5, 1.5))]);
        assert_eq!(combo.evaluate(&[0.75]).unwrap(), 1.0);
        assert!(matches!(ind().evaluate(&[0.5, 0.5]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn cell_integral_examples() {
        assert_eq!(ind().cell_integral(&Cell::new(vec![0], 0.5)).unwrap(), 0.5);
        assert_eq!(ind().cell_integral(&Cell::new(vec![2], 0.5)).unwrap(), 0.0);
        let g = FunctionSpec::gauss(0.0, 1.0);
        let v = g.cell_integral(&Cell::new(vec![0], 8.0)).unwrap();
        // high-order quadrature oracle, frozen
        let oracle = quad::integrate(&|x: f64| (-0.5 * x * x).exp(), 0.0, 8.0, Tolerance::abs(1e-14)).unwrap().value;
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 1.2533141373155).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_agree_with_quadrature() {
        let specs = [
            FunctionSpec::gauss(0.3, 0.7),
            FunctionSpec::PowerTail { delta: 1.3, cutoff: 0.5 },
            FunctionSpec::PowerTail { delta: 1.0, cutoff: 2.0 },
            FunctionSpec::LfsmKernel { t: 1.0, hurst: 0.7, alpha: 1.5, a: 1.0, b: 0.5 },
            FunctionSpec::LfsmKernel { t: 1.0, hurst: 0.4, alpha: 1.5, a: 0.3, b: 1.0 },
            FunctionSpec::gauss(0.0, 1.0).shifted(vec![0.4]).scaled(-2.0),
        ];
        let boxes = [(-3.0, -1.0), (-0.2, 0.9), (0.5, 2.5), (0.99, 1.01), (3.0, 7.0)];
        for s in &specs {
            for &(lo, hi) in &boxes {
                let b = Bounds::interval(lo, hi);
                let exact = s.box_integral(&b).unwrap();
                let num = numeric_box(s, &|v| v, &b, Tolerance::new(1e-12, 1e-12)).unwrap();
                assert!((exact - num).abs() < 1e-9 * (1.0 + exact.abs()), "{s:?} on {b:?}: {exact} vs {num}");
                let pa = s.abs_power_integral(1.5, &b).unwrap();
                let pn = numeric_box(s, &|v: f64| v.abs().powf(1.5), &b, Tolerance::new(1e-11, 1e-10)).unwrap();
                assert!((pa - pn).abs() < 1e-8 * (1.0 + pa.abs()), "{s:?} on {b:?}: {pa} vs {pn}");
            }
        }
    }

    #[test]
    fn two_dimensional_boxes() {
        let g = FunctionSpec::GaussBump {
            center: vec![0.0, 0.5],
            width: 0.8,
        };
        let b = Bounds::new(vec![-1.0, 0.0], vec![0.5, 2.0]);
        let exact = g.box_integral(&b).unwrap();
        let num = numeric_box(&g, &|v| v, &b, Tolerance::new(1e-12, 1e-11)).unwrap();
        assert!((exact - num).abs() < 1e-9);
        let sq = FunctionSpec::IndicatorBox {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 2.0],
        };
        assert_eq!(sq.cell_integral(&Cell::new(vec![1, 3], 0.5)).unwrap(), 0.25);
        assert_eq!(sq.cell_integral(&Cell::new(vec![2, 0], 0.5)).unwrap(), 0.0);
    }

    #[test]
    fn validation() {
        assert_eq!(ind().validate().unwrap(), 1);
        assert!(FunctionSpec::gauss(0.0, 0.0).validate().is_err());
        let mixed = FunctionSpec::combination([
            (1.0, ind()),
            (
                1.0,
                FunctionSpec::GaussBump {
                    center: vec![0.0, 0.0],
                    width: 1.0,
                },
            ),
        ]);
        assert!(matches!(mixed.validate(), Err(Error::DimensionMismatch { .. })));
        assert!(ind().scaled(0.0).validate().is_err());
        let k = FunctionSpec::LfsmKernel { t: 1.0, hurst: 0.5, alpha: 2.0, a: 1.0, b: 0.0 };
        assert!(k.validate().is_err());
        let cube = FunctionSpec::IndicatorBox {
            lower: vec![0.0; 3],
            upper: vec![1.0; 3],
        };
        assert!(cube.validate().is_err());
    }

    #[test]
    fn serde_round_trip() {
        let s = FunctionSpec::combination([
            (2.0, ind()),
            (-1.0, FunctionSpec::gauss(0.0, 1.0).shifted(vec![1.0]).scaled(3.0)),
            (0.5, FunctionSpec::LfsmKernel { t: 1.0, hurst: 0.7, alpha: 1.5, a: 1.0, b: 0.0 }),
        ]);
        let txt = serde_json::to_string(&s).unwrap();
        assert!(txt.contains("\"type\":\"linear_combination\""));
        let back: FunctionSpec = serde_json::from_str(&txt).unwrap();
        assert_eq!(back, s);
        let parsed: FunctionSpec = serde_json::from_str(r#"{"type":"indicator_box","lower":[0],"upper":[1]}"#).unwrap();
        assert_eq!(parsed, ind());
    }

    #[test]
    fn lp_norm_examples() {
        assert!((lp_norm(&ind(), 1.5, &Window::Auto).unwrap() - 1.0).abs() < 1e-14);
        for &c in &[0.5, 3.0] {
            let v = lp_norm(&ind().scaled(c), 1.7, &Window::Auto).unwrap();
            assert!((v - c).abs() < 1e-12);
            let w = lp_norm(&FunctionSpec::indicator(0.0, 2.0).scaled(c), 1.7, &Window::Auto).unwrap();
            assert!((w - c * 2f64.powf(1.0 / 1.7)).abs() < 1e-12);
        }
        // Gaussian: ∫ exp(-p x²/2) = sqrt(2π/p)
        let g = lp_norm(&FunctionSpec::gauss(0.0, 1.0), 1.2, &Window::Auto).unwrap();
        assert!((g - (2.0 * std::f64::consts::PI / 1.2).sqrt().powf(1.0 / 1.2)).abs() < 1e-8 * g);
    }

    #[test]
    fn lp_norm_of_lfsm_kernel_is_finite() {
        let k = FunctionSpec::LfsmKernel { t: 1.0, hurst: 0.7, alpha: 1.5, a: 1.0, b: 0.0 };
        let v = lp_norm(&k, 1.5, &Window::Auto).unwrap();
        assert!(v.is_finite() && v > 0.0);
        // oracle: explicit quadrature on [-R, 1] plus the power-law tail γ^α ∫_R^∞ x^{(γ-1)α}
        let g: f64 = 0.7 - 1.0 / 1.5;
        let r = 1.0e4;
        let body = numeric_box(&k, &|v: f64| v.abs().powf(1.5), &Bounds::interval(-r, 1.0), Tolerance::new(1e-12, 1e-12)).unwrap();
        let e = (g - 1.0) * 1.5;
        // next-order expansion: (x+1)^γ - x^γ = γ x^{γ-1} (1 + (γ-1)/(2x) + ...)
        let tail = g.powf(1.5) * r.powf(e + 1.0) / -(e + 1.0);
        let oracle = (body + tail).powf(1.0 / 1.5);
        assert!((v - oracle).abs() < 1e-4 * oracle, "{v} vs {oracle}");
    }

    #[test]
    fn divergent_norm_is_reported() {
        let slow = FunctionSpec::PowerTail { delta: 0.5, cutoff: 1.0 };
        assert!(matches!(lp_norm(&slow, 1.5, &Window::Auto), Err(Error::TailWindow { .. })));
    }

    #[test]
    fn tail_window_examples() {
        let w = tail_window(&ind(), 1.3, 1e-3).unwrap();
        let b = w.bounds.unwrap();
        assert!(b.lo[0] >= -1.0 && b.hi[0] <= 2.0);
        assert_eq!(w.tail_mass, 0.0);

        // PowerTail(2, 1) at α = 1: total mass 4, tail beyond R is 2/R
        let p = FunctionSpec::PowerTail { delta: 2.0, cutoff: 1.0 };
        let w = tail_window(&p, 1.0, 1e-3).unwrap();
        let b = w.bounds.unwrap();
        let r = b.hi[0].min(-b.lo[0]);
        let outside = 1.0 / -b.lo[0] + 1.0 / b.hi[0];
        assert!(outside <= 1e-3 * 4.0, "radius {r}");
        assert!(1.0 / r <= 1e-3 * 4.0);

        let g = tail_window(&FunctionSpec::gauss(0.0, 1.0), 2.0, 1e-6).unwrap();
        let b = g.bounds.unwrap();
        assert!(b.hi[0] <= 8.0 && b.lo[0] >= -8.0, "{b:?}");
        // Gaussian tail bound: ∫_{|x|>R} e^{-x²} ≤ sqrt(π) erfc(R)
        assert!(libm::erfc(b.hi[0]) <= 1e-6);

        let z = tail_window(&FunctionSpec::zero(1), 1.5, 1e-3).unwrap();
        assert!(z.bounds.is_none());
        assert!(tail_window(&ind(), 1.5, 1.5).is_err());
    }

    #[test]
    fn tail_window_two_dimensional() {
        let g = FunctionSpec::GaussBump {
            center: vec![0.0, 1.0],
            width: 0.5,
        };
        let w = tail_window(&g, 1.5, 1e-6).unwrap();
        let b = w.bounds.unwrap();
        let total = std::f64::consts::PI * 2.0 * 0.25 / 1.5;
        let inside = g.abs_power_integral(1.5, &b).unwrap();
        assert!(total - inside <= 1e-6 * total);
    }

    #[test]
    fn derivative_of_smooth_specs() {
        let s = FunctionSpec::gauss(0.2, 0.9).shifted(vec![0.1]).scaled(2.0);
        assert!(s.is_smooth());
        let x = 0.7;
        let h = 1e-5;
        let fd = (s.eval(&[x + h]) - s.eval(&[x - h])) / (2.0 * h);
        assert!((s.derivative(x).unwrap() - fd).abs() < 1e-8);
        assert!(!ind().is_smooth());
        assert!(ind().derivative(0.5).is_none());
        assert!(FunctionSpec::zero(1).is_smooth());
        assert_eq!(FunctionSpec::zero(1).derivative(0.3), Some(0.0));
    }
}
