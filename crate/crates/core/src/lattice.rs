//! Lattice coefficient families.
//!
//! Two schemes are supported on the grid `hZ^d` with cells `h(k + [0,1)^d)`:
//!
//! * [`Scheme::CellAverage`]: `f^h(k) = h^{d(1/α-1)} ∫_cell f`. With this
//!   normalization `Σ|f^h(k)|^α = ‖f_h‖_α^α` holds for the piecewise-constant
//!   cell-average approximant `f_h`, so norms of the family match norms of
//!   functions.
//! * [`Scheme::ExactSignedPower`]: `u_k = (∫_cell f^{<α>})^{<1/α>}` with
//!   `x^{<α>} = sign(x)|x|^α`. Against exact SαS noise this reproduces the law
//!   of `∫ f dM_α` exactly when `f` has constant sign on every cell.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::{numeric_box, tail_window, Bounds, FunctionSpec, Integrand};
use crate::io::{fmt_f64, parse_f64, Table};
use crate::quad::Tolerance;
use crate::rng::max_coordinate;
use crate::stable::check_alpha;

/// Default truncation tolerance for the discarded `α`-mass.
pub const DEFAULT_TRUNC_TOL: f64 = 1e-6;

/// Largest window (in cells) a discretization may allocate.
pub const MAX_CELLS: u128 = 50_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    CellAverage,
    ExactSignedPower,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cell-average" | "cell_average" => Ok(Scheme::CellAverage),
            "exact" | "exact-signed-power" | "exact_signed_power" => Ok(Scheme::ExactSignedPower),
            _ => Err(Error::param(format!("unknown scheme {s:?} (expected cell-average or exact)"))),
        }
    }
}

/// Inclusive box of lattice indices `lo ≤ k ≤ hi`; empty when any `hi < lo`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexWindow {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl IndexWindow {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Self {
        IndexWindow { lo, hi }
    }

    pub fn empty(dim: usize) -> Self {
        IndexWindow {
            lo: vec![0; dim],
            hi: vec![-1; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| h < l)
    }

    /// Extent along each axis.
    pub fn shape(&self) -> Vec<usize> {
        if self.is_empty() {
            return vec![0; self.dim()];
        }
        self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l + 1) as usize).collect()
    }

    pub fn count(&self) -> u128 {
        if self.is_empty() {
            return 0;
        }
        self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l + 1) as u128).product()
    }

    pub fn len(&self) -> usize {
        self.count() as usize
    }

    pub fn contains(&self, k: &[i64]) -> bool {
        !self.is_empty() && k.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| l <= v && v <= h)
    }

    /// Smallest window holding both.
    pub fn union(&self, other: &IndexWindow) -> IndexWindow {
        if self.is_empty() {
            return other.clone();
        }
        if other.is_empty() {
            return self.clone();
        }
        IndexWindow {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| *a.min(b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| *a.max(b)).collect(),
        }
    }

    /// Row-major position of `k`, which must lie in the window.
    pub fn position(&self, k: &[i64]) -> usize {
        match k.len() {
            1 => (k[0] - self.lo[0]) as usize,
            _ => {
                let w = (self.hi[1] - self.lo[1] + 1) as usize;
                (k[0] - self.lo[0]) as usize * w + (k[1] - self.lo[1]) as usize
            }
        }
    }

    /// Index at row-major position `p`.
    pub fn index(&self, p: usize) -> Vec<i64> {
        match self.dim() {
            1 => vec![self.lo[0] + p as i64],
            _ => {
                let w = (self.hi[1] - self.lo[1] + 1) as usize;
                vec![self.lo[0] + (p / w) as i64, self.lo[1] + (p % w) as i64]
            }
        }
    }

    /// Cells meeting the half-open box `b` on the grid `hZ^d`.
    pub fn covering(b: &Bounds, h: f64) -> Result<IndexWindow> {
        if b.is_empty() {
            return Ok(IndexWindow::empty(b.dim()));
        }
        let limit = max_coordinate(b.dim()) as f64;
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for i in 0..b.dim() {
            let l = (b.lo[i] / h).floor();
            let u = (b.hi[i] / h).ceil() - 1.0;
            if !(l.abs() <= limit && u.abs() <= limit) {
                return Err(Error::WindowTooLarge {
                    cells: u128::MAX,
                    limit: MAX_CELLS,
                });
            }
            lo.push(l as i64);
            hi.push((u as i64).max(l as i64));
        }
        Ok(IndexWindow { lo, hi })
    }
}

/// A discretized integrand: dense coefficients over an index window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellCoefficients {
    pub h: f64,
    pub dim: usize,
    pub alpha: f64,
    pub scheme: Scheme,
    pub window: IndexWindow,
    /// Row-major over `window`.
    pub values: Vec<f64>,
    /// Estimate of `∫_{W^c}|f|^α` for the region the window leaves out.
    pub tail_mass_bound: f64,
    pub trunc_tol: f64,
}

/// Compensated summation, for norms that must not depend on magnitude order.
pub(crate) fn neumaier_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

fn check_grid(h: f64, alpha: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::param(format!("spacing h must be positive, got {h}")));
    }
    check_alpha(alpha)
}

fn check_trunc(trunc_tol: f64) -> Result<()> {
    if !(trunc_tol > 0.0 && trunc_tol < 1.0) {
        return Err(Error::param(format!("truncation tolerance must lie in (0, 1), got {trunc_tol}")));
    }
    Ok(())
}

fn signed_root(v: f64, alpha: f64) -> f64 {
    v.abs().powf(1.0 / alpha).copysign(v)
}

impl CellCoefficients {
    /// A family from explicit values, e.g. for harness inputs.
    pub fn from_values(h: f64, alpha: f64, scheme: Scheme, window: IndexWindow, values: Vec<f64>) -> Result<Self> {
        check_grid(h, alpha)?;
        if window.len() != values.len() {
            return Err(Error::Incompatible(format!(
                "window holds {} cells but {} values were given",
                window.len(),
                values.len()
            )));
        }
        Ok(CellCoefficients {
            h,
            dim: window.dim(),
            alpha,
            scheme,
            window,
            values,
            tail_mass_bound: 0.0,
            trunc_tol: 0.0,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Coefficient at lattice index `k` (zero outside the window).
    pub fn get(&self, k: &[i64]) -> f64 {
        if self.window.contains(k) {
            self.values[self.window.position(k)]
        } else {
            0.0
        }
    }

    /// `(index, value)` pairs in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (Vec<i64>, f64)> + '_ {
        self.values.iter().enumerate().map(|(p, v)| (self.window.index(p), *v))
    }

    /// `Σ|c_k|^α`.
    pub fn alpha_mass(&self) -> f64 {
        let a = self.alpha;
        neumaier_sum(self.values.iter().map(|v| v.abs().powf(a)))
    }

    /// `(ℓ^α norm, ℓ^∞ norm)`.
    pub fn norms(&self) -> (f64, f64) {
        let linf = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (self.alpha_mass().powf(1.0 / self.alpha), linf)
    }

    /// Multiplies every coefficient by `c`.
    pub fn scaled(&self, c: f64) -> CellCoefficients {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out.tail_mass_bound *= c.abs().powf(self.alpha);
        out
    }

    /// Same grid check used by joint sampling.
    pub fn same_grid(&self, other: &CellCoefficients) -> bool {
        self.h == other.h && self.dim == other.dim && self.alpha == other.alpha
    }

    /// Merges blocks of `factor^d` cells into cells of spacing `factor·h`.
    ///
    /// Cell averages combine as `factor^{d(1/α-1)} Σ f^h(k)`, signed-power
    /// coefficients as `(Σ u_k^{<α>})^{<1/α>}`; both reproduce a direct
    /// discretization at the coarse spacing.
    pub fn aggregate(&self, factor: usize) -> Result<CellCoefficients> {
        if factor == 0 {
            return Err(Error::param("aggregation factor must be positive"));
        }
        let f = factor as i64;
        let d = self.dim;
        let window = if self.window.is_empty() {
            IndexWindow::empty(d)
        } else {
            IndexWindow {
                lo: self.window.lo.iter().map(|l| l.div_euclid(f)).collect(),
                hi: self.window.hi.iter().map(|h| h.div_euclid(f)).collect(),
            }
        };
        let mut acc = vec![0.0; window.len()];
        for (k, v) in self.entries() {
            let kc: Vec<i64> = k.iter().map(|x| x.div_euclid(f)).collect();
            let p = window.position(&kc);
            acc[p] += match self.scheme {
                Scheme::CellAverage => v,
                Scheme::ExactSignedPower => v.abs().powf(self.alpha).copysign(v),
            };
        }
        let renorm = (factor as f64).powf(d as f64 * (1.0 / self.alpha - 1.0));
        for v in acc.iter_mut() {
            *v = match self.scheme {
                Scheme::CellAverage => renorm * *v,
                Scheme::ExactSignedPower => signed_root(*v, self.alpha),
            };
        }
        Ok(CellCoefficients {
            h: self.h * factor as f64,
            dim: d,
            alpha: self.alpha,
            scheme: self.scheme,
            window,
            values: acc,
            tail_mass_bound: self.tail_mass_bound,
            trunc_tol: self.trunc_tol,
        })
    }

    pub fn to_table(&self) -> Table {
        let manifest = serde_json::json!({
            "kind": "cell_coefficients",
            "h": self.h,
            "dim": self.dim,
            "alpha": self.alpha,
            "scheme": self.scheme,
            "window": self.window,
            "tail_mass_bound": self.tail_mass_bound,
            "trunc_tol": self.trunc_tol,
        });
        let mut columns: Vec<String> = (0..self.dim).map(|i| format!("k{i}")).collect();
        columns.push("value".into());
        let mut t = Table::new(manifest, columns);
        for (k, v) in self.entries() {
            let mut row: Vec<String> = k.iter().map(|x| x.to_string()).collect();
            row.push(fmt_f64(v));
            t.rows.push(row);
        }
        t
    }

    pub fn from_table(t: &Table) -> Result<CellCoefficients> {
        t.expect_kind("cell_coefficients")?;
        let dim: usize = t.field("dim")?;
        let window: IndexWindow = t.field("window")?;
        if window.dim() != dim || t.columns.len() != dim + 1 {
            return Err(Error::Parse("coefficient table dimension does not match its window".into()));
        }
        let mut values = vec![0.0; window.len()];
        for row in &t.rows {
            let k = row[..dim]
                .iter()
                .map(|s| s.trim().parse::<i64>().map_err(|_| Error::Parse(format!("bad index {s:?}"))))
                .collect::<Result<Vec<i64>>>()?;
            if !window.contains(&k) {
                return Err(Error::Parse(format!("index {k:?} lies outside the declared window")));
            }
            values[window.position(&k)] = parse_f64(&row[dim])?;
        }
        Ok(CellCoefficients {
            h: t.field("h")?,
            dim,
            alpha: t.field("alpha")?,
            scheme: t.field("scheme")?,
            window,
            values,
            tail_mass_bound: t.field("tail_mass_bound")?,
            trunc_tol: t.field("trunc_tol")?,
        })
    }
}

/// Coefficients of `f` on an explicit window.
pub fn discretize_on<I: Integrand + ?Sized>(f: &I, h: f64, alpha: f64, window: &IndexWindow, scheme: Scheme) -> Result<CellCoefficients> {
    check_grid(h, alpha)?;
    if window.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: window.dim(),
        });
    }
    let cells = window.count();
    if cells > MAX_CELLS {
        return Err(Error::WindowTooLarge { cells, limit: MAX_CELLS });
    }
    let d = f.dim() as f64;
    let renorm = h.powf(d * (1.0 / alpha - 1.0));
    let values = (0..window.len())
        .into_par_iter()
        .map(|p| {
            let k = window.index(p);
            let b = Bounds::new(
                k.iter().map(|&i| i as f64 * h).collect(),
                k.iter().map(|&i| (i + 1) as f64 * h).collect(),
            );
            Ok(match scheme {
                Scheme::CellAverage => renorm * f.box_integral(&b)?,
                Scheme::ExactSignedPower => signed_root(f.signed_power_integral(alpha, &b)?, alpha),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(CellCoefficients {
        h,
        dim: f.dim(),
        alpha,
        scheme,
        window: window.clone(),
        values,
        tail_mass_bound: 0.0,
        trunc_tol: 0.0,
    })
}

/// Coefficients of any integrand over the window picked by [`tail_window`].
pub fn discretize_integrand<I: Integrand + ?Sized>(f: &I, h: f64, alpha: f64, trunc_tol: f64, scheme: Scheme) -> Result<CellCoefficients> {
    check_grid(h, alpha)?;
    check_trunc(trunc_tol)?;
    let tw = tail_window(f, alpha, trunc_tol)?;
    let window = match &tw.bounds {
        Some(b) => IndexWindow::covering(b, h)?,
        None => IndexWindow::empty(f.dim()),
    };
    let mut c = discretize_on(f, h, alpha, &window, scheme)?;
    c.tail_mass_bound = tw.tail_mass;
    c.trunc_tol = trunc_tol;
    Ok(c)
}

/// Cell-average coefficients `h^{d(1/α-1)} ∫_cell f`.
pub fn discretize(spec: &FunctionSpec, h: f64, alpha: f64, trunc_tol: f64) -> Result<CellCoefficients> {
    spec.validate()?;
    discretize_integrand(spec, h, alpha, trunc_tol, Scheme::CellAverage)
}

/// Signed-power coefficients `(∫_cell f^{<α>})^{<1/α>}`.
pub fn discretize_exact(spec: &FunctionSpec, h: f64, alpha: f64, trunc_tol: f64) -> Result<CellCoefficients> {
    spec.validate()?;
    discretize_integrand(spec, h, alpha, trunc_tol, Scheme::ExactSignedPower)
}

/// Distance between `f` and its piecewise-constant cell-average approximant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseError {
    /// `‖f_h - f‖_{L^α}` over the truncation window.
    pub value: f64,
    /// `α < 1`: outside the range where the approximation lemma applies.
    pub outside_lemma_range: bool,
}

struct CellResidual<'a, I: ?Sized> {
    f: &'a I,
    mean: f64,
    cell: Bounds,
}

impl<I: Integrand + ?Sized> Integrand for CellResidual<'_, I> {
    fn dim(&self) -> usize {
        self.f.dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        self.f.eval(x) - self.mean
    }
    fn breakpoints(&self, axis: usize) -> Vec<f64> {
        self.f.breakpoints(axis)
    }
    fn support(&self) -> Option<Bounds> {
        Some(self.cell.clone())
    }
    fn core_box(&self) -> Bounds {
        self.cell.clone()
    }
}

/// Tail tolerance for the window used by [`piecewise_error`].
const PIECEWISE_TAIL_TOL: f64 = 1e-10;

/// `‖f_h - f‖_{L^α}` where `f_h` equals the cell average of `f` on each cell.
pub fn piecewise_error(spec: &FunctionSpec, h: f64, alpha: f64) -> Result<PiecewiseError> {
    spec.validate()?;
    check_grid(h, alpha)?;
    let tw = tail_window(spec, alpha, PIECEWISE_TAIL_TOL)?;
    let window = match &tw.bounds {
        Some(b) => IndexWindow::covering(b, h)?,
        None => IndexWindow::empty(spec.dim()),
    };
    if window.count() > MAX_CELLS {
        return Err(Error::WindowTooLarge {
            cells: window.count(),
            limit: MAX_CELLS,
        });
    }
    let vol = h.powi(spec.dim() as i32);
    let parts = (0..window.len())
        .into_par_iter()
        .map(|p| {
            let k = window.index(p);
            let cell = Bounds::new(
                k.iter().map(|&i| i as f64 * h).collect(),
                k.iter().map(|&i| (i + 1) as f64 * h).collect(),
            );
            let mean = spec.box_integral(&cell)? / vol;
            let r = CellResidual { f: spec, mean, cell };
            let tol = Tolerance::new(1e-12 * vol, 1e-9);
            numeric_box(&r, &|v: f64| v.abs().powf(alpha), &r.cell, tol)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(PiecewiseError {
        value: neumaier_sum(parts).max(0.0).powf(1.0 / alpha),
        outside_lemma_range: alpha < 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ind() -> FunctionSpec {
        FunctionSpec::indicator(0.0, 1.0)
    }

    #[test]
    fn discretize_examples() {
        let c = discretize(&ind(), 0.5, 2.0, 1e-6).unwrap();
        assert_eq!(c.window, IndexWindow::new(vec![0], vec![1]));
        for v in &c.values {
            assert!((v - 0.5f64.sqrt()).abs() < 1e-15);
        }
        assert!((c.norms().0 - 1.0).abs() < 1e-15);

        let c = discretize(&ind(), 0.25, 1.5, 1e-6).unwrap();
        assert_eq!(c.len(), 4);
        for v in &c.values {
            assert!((v - 0.25f64.powf(2.0 / 3.0)).abs() < 1e-15);
        }
        assert!((c.alpha_mass() - 1.0).abs() < 1e-14);

        let z = discretize(&FunctionSpec::zero(1), 0.3, 1.2, 1e-6).unwrap();
        assert!(z.is_empty());
        assert_eq!(z.norms(), (0.0, 0.0));
    }

    #[test]
    fn exact_examples() {
        let c = discretize_exact(&ind(), 0.25, 1.5, 1e-6).unwrap();
        for v in &c.values {
            assert!((v - 0.25f64.powf(1.0 / 1.5)).abs() < 1e-15);
        }
        let n = discretize_exact(&ind().scaled(-1.0), 0.25, 1.5, 1e-6).unwrap();
        for (a, b) in c.values.iter().zip(&n.values) {
            assert_eq!(*a, -*b);
        }
        let g = FunctionSpec::gauss(0.0, 1.0);
        let e = discretize_exact(&g, 0.1, 1.5, 1e-9).unwrap();
        let total = (2.0 * std::f64::consts::PI / 1.5).sqrt();
        assert!((e.alpha_mass() - total).abs() < 1e-6, "{}", e.alpha_mass());
    }

    #[test]
    fn norms_examples() {
        let c = CellCoefficients::from_values(1.0, 2.0, Scheme::CellAverage, IndexWindow::new(vec![0], vec![1]), vec![0.5, 0.5]).unwrap();
        let (la, li) = c.norms();
        assert!((la - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(li, 0.5);
        for &h in &[1.0, 0.5, 0.25] {
            for &a in &[1.2, 1.5, 2.0] {
                let c = discretize(&ind(), h, a, 1e-6).unwrap();
                assert!((c.norms().0 - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn window_covers_support() {
        let c = discretize(&FunctionSpec::indicator(-0.3, 0.9), 0.25, 1.5, 1e-6).unwrap();
        assert_eq!(c.window, IndexWindow::new(vec![-2], vec![3]));
        let two = FunctionSpec::IndicatorBox {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 0.5],
        };
        let c = discretize(&two, 0.25, 1.5, 1e-6).unwrap();
        assert_eq!(c.window.shape(), vec![4, 2]);
        assert!((c.alpha_mass() - 0.5).abs() < 1e-14);
        assert_eq!(c.get(&[3, 1]), c.values[7]);
        assert_eq!(c.get(&[9, 9]), 0.0);
    }

    #[test]
    fn aggregation_reproduces_coarse_grid() {
        let f = FunctionSpec::combination([(2.0, FunctionSpec::indicator(0.0, 1.0)), (-1.0, FunctionSpec::indicator(-0.5, 0.25))]);
        for scheme in [Scheme::CellAverage, Scheme::ExactSignedPower] {
            let fine = discretize_integrand(&f, 0.125, 1.5, 1e-6, scheme).unwrap();
            let coarse = discretize_integrand(&f, 0.25, 1.5, 1e-6, scheme).unwrap();
            let agg = fine.aggregate(2).unwrap();
            assert_eq!(agg.window, coarse.window);
            for (a, b) in agg.values.iter().zip(&coarse.values) {
                assert!((a - b).abs() < 1e-12, "{scheme:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn piecewise_error_examples() {
        let e = piecewise_error(&ind(), 0.25, 1.5).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(!e.outside_lemma_range);
        // misaligned: cell [0.8, 1.2) has average 1/2, so the error is 0.4 · 1/2
        let e = piecewise_error(&ind(), 0.4, 1.0).unwrap();
        assert!((e.value - 0.2).abs() < 1e-9, "{}", e.value);
        let g = FunctionSpec::gauss(0.0, 1.0);
        let coarse = piecewise_error(&g, 0.2, 2.0).unwrap().value;
        let fine = piecewise_error(&g, 0.05, 2.0).unwrap().value;
        assert!(fine < coarse);
        assert!(piecewise_error(&ind(), 0.4, 0.8).unwrap().outside_lemma_range);
    }

    #[test]
    fn table_round_trip() {
        let c = discretize(&FunctionSpec::gauss(0.3, 0.5), 0.1, 1.5, 1e-6).unwrap();
        let back = CellCoefficients::from_table(&Table::parse(&c.to_table().render()).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
