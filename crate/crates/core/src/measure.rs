//! Monte-Carlo sampling of discretized stable integrals `Σ_k c_k ξ_k`.
//!
//! The noise variate of cell `k` in replicate `r` is read from a fixed
//! position of replicate `r`'s keystream (see [`crate::rng`]), so every
//! functional sampled with the same seed sees the same noise field, whatever
//! its window, and results do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64, Table};
use crate::lattice::{CellCoefficients, IndexWindow, Scheme};
use crate::rng::{cell_address, seek_cell, SeedSpec};
use crate::stable::NoiseModel;

/// Metadata carried by every batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchMeta {
    pub alpha: f64,
    pub h: f64,
    pub noise: NoiseModel,
    pub seed: SeedSpec,
    pub labels: Vec<String>,
}

/// `n_replicates × n_functionals` samples; each row shares one noise field.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub n_replicates: usize,
    /// Row-major.
    pub values: Vec<f64>,
    pub meta: BatchMeta,
}

impl SampleBatch {
    pub fn n_functionals(&self) -> usize {
        self.meta.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.n_functionals();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let m = self.n_functionals();
        (0..self.n_replicates).map(|i| self.values[i * m + j]).collect()
    }

    /// `Σ_j w_j X_j` per row.
    pub fn combine(&self, weights: &[f64]) -> Result<Vec<f64>> {
        if weights.len() != self.n_functionals() {
            return Err(Error::DimensionMismatch {
                expected: self.n_functionals(),
                got: weights.len(),
            });
        }
        Ok((0..self.n_replicates)
            .map(|i| self.row(i).iter().zip(weights).map(|(x, w)| x * w).sum())
            .collect())
    }

    pub fn to_table(&self) -> Table {
        let manifest = serde_json::json!({
            "kind": "sample_batch",
            "alpha": self.meta.alpha,
            "h": self.meta.h,
            "noise": self.meta.noise,
            "seed": self.meta.seed,
            "labels": self.meta.labels,
            "n_replicates": self.n_replicates,
        });
        let mut t = Table::new(manifest, self.meta.labels.clone());
        for i in 0..self.n_replicates {
            t.rows.push(self.row(i).iter().map(|v| fmt_f64(*v)).collect());
        }
        t
    }

    pub fn from_table(t: &Table) -> Result<SampleBatch> {
        t.expect_kind("sample_batch")?;
        let meta = BatchMeta {
            alpha: t.field("alpha")?,
            h: t.field("h")?,
            noise: t.field("noise")?,
            seed: t.field("seed")?,
            labels: t.field("labels")?,
        };
        if meta.labels != t.columns {
            return Err(Error::Parse("column names disagree with the manifest labels".into()));
        }
        let n_replicates: usize = t.field("n_replicates")?;
        if n_replicates != t.rows.len() {
            return Err(Error::Parse(format!("manifest declares {n_replicates} rows, found {}", t.rows.len())));
        }
        let values = t
            .rows
            .iter()
            .flat_map(|r| r.iter().map(|s| parse_f64(s)))
            .collect::<Result<Vec<f64>>>()?;
        Ok(SampleBatch { n_replicates, values, meta })
    }
}

/// Replicates handled by one parallel task.
const CHUNK: usize = 64;

/// Coefficients of several functionals on a shared window, cell-major.
struct Field {
    window: IndexWindow,
    m: usize,
    coef: Vec<f64>,
}

impl Field {
    fn new(list: &[&CellCoefficients]) -> Field {
        let dim = list[0].dim;
        let window = list.iter().fold(IndexWindow::empty(dim), |w, c| w.union(&c.window));
        let m = list.len();
        let mut coef = vec![0.0; window.len() * m];
        for (j, c) in list.iter().enumerate() {
            for (k, v) in c.entries() {
                coef[window.position(&k) * m + j] = v;
            }
        }
        Field { window, m, coef }
    }

    /// Rows of the window as `(address of first cell, cell count, offset)`;
    /// a 1-d window is a single row.
    fn rows(&self) -> Vec<(u64, usize, usize)> {
        if self.window.is_empty() {
            return Vec::new();
        }
        let shape = self.window.shape();
        match self.window.dim() {
            1 => vec![(cell_address(&self.window.lo), shape[0], 0)],
            _ => (0..shape[0])
                .map(|r| {
                    let k = [self.window.lo[0] + r as i64, self.window.lo[1]];
                    (cell_address(&k), shape[1], r * shape[1])
                })
                .collect(),
        }
    }

    fn sample(&self, noise: &NoiseModel, n: usize, seed: SeedSpec) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; n * m];
        let rows = self.rows();
        if rows.is_empty() || m == 0 {
            return out;
        }
        let sampler = noise.sampler();
        let per = sampler.u64s_per_draw();
        out.par_chunks_mut(CHUNK * m).enumerate().for_each(|(c, chunk)| {
            let mut acc = vec![0.0; m];
            for (i, slot) in chunk.chunks_mut(m).enumerate() {
                let r = (c * CHUNK + i) as u64;
                let mut rng = seed.replicate_rng(r);
                acc.iter_mut().for_each(|a| *a = 0.0);
                for &(addr, len, off) in &rows {
                    seek_cell(&mut rng, addr, per);
                    let block = &self.coef[off * m..(off + len) * m];
                    if m == 1 {
                        let mut s = acc[0];
                        for &c in block {
                            s += c * sampler.draw(&mut rng);
                        }
                        acc[0] = s;
                    } else {
                        for cell in block.chunks_exact(m) {
                            let xi = sampler.draw(&mut rng);
                            for (a, c) in acc.iter_mut().zip(cell) {
                                *a += c * xi;
                            }
                        }
                    }
                }
                slot.copy_from_slice(&acc);
            }
        });
        out
    }
}

fn check_noise(c: &CellCoefficients, noise: &NoiseModel) -> Result<()> {
    noise.validate()?;
    if c.alpha != noise.alpha() {
        return Err(Error::Incompatible(format!(
            "coefficients were built for alpha = {} but the noise has alpha = {}",
            c.alpha,
            noise.alpha()
        )));
    }
    Ok(())
}

/// `n` replicates of `Σ_k c_k ξ_k`.
pub fn sample_integral(coeffs: &CellCoefficients, noise: &NoiseModel, n: usize, seed: SeedSpec) -> Result<SampleBatch> {
    sample_fdd_labeled(&[coeffs], &["f0".to_string()], noise, n, seed)
}

/// Joint samples of several functionals, all evaluated on one noise field per
/// replicate. The families must share `h`, `d` and `α`; windows may differ.
pub fn sample_fdd(list: &[CellCoefficients], noise: &NoiseModel, n: usize, seed: SeedSpec) -> Result<SampleBatch> {
    let refs: Vec<&CellCoefficients> = list.iter().collect();
    let labels: Vec<String> = (0..list.len()).map(|j| format!("f{j}")).collect();
    sample_fdd_labeled(&refs, &labels, noise, n, seed)
}

/// [`sample_fdd`] with explicit column labels.
pub fn sample_fdd_labeled(list: &[&CellCoefficients], labels: &[String], noise: &NoiseModel, n: usize, seed: SeedSpec) -> Result<SampleBatch> {
    let first = list.first().ok_or(Error::Empty("functional list"))?;
    if labels.len() != list.len() {
        return Err(Error::DimensionMismatch {
            expected: list.len(),
            got: labels.len(),
        });
    }
    for c in list {
        check_noise(c, noise)?;
        if !c.same_grid(first) {
            return Err(Error::Incompatible(format!(
                "functionals live on different grids: (h={}, d={}) vs (h={}, d={})",
                first.h, first.dim, c.h, c.dim
            )));
        }
    }
    let field = Field::new(list);
    Ok(SampleBatch {
        n_replicates: n,
        values: field.sample(noise, n, seed),
        meta: BatchMeta {
            alpha: first.alpha,
            h: first.h,
            noise: *noise,
            seed,
            labels: labels.to_vec(),
        },
    })
}

/// Finitely supported filter `v_k`, `k = start .. start + taps.len()`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub start: i64,
    pub taps: Vec<f64>,
}

impl Filter {
    pub fn new(start: i64, taps: Vec<f64>) -> Result<Filter> {
        if taps.is_empty() {
            return Err(Error::Empty("filter taps"));
        }
        if taps.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("filter taps must be finite"));
        }
        Ok(Filter { start, taps })
    }

    pub fn identity() -> Filter {
        Filter {
            start: 0,
            taps: vec![1.0],
        }
    }

    pub fn get(&self, k: i64) -> f64 {
        let i = k - self.start;
        if i >= 0 && (i as usize) < self.taps.len() {
            self.taps[i as usize]
        } else {
            0.0
        }
    }

    fn end(&self) -> i64 {
        self.start + self.taps.len() as i64 - 1
    }
}

fn one_dimensional(c: &CellCoefficients) -> Result<()> {
    if c.dim != 1 {
        return Err(Error::Unsupported("noise filtering is defined on one-dimensional lattices".into()));
    }
    Ok(())
}

/// `g_l = Σ_k c_k v_{k-l}`, i.e. `c ∗ v̌` with `v̌_k = v_{-k}`.
pub fn convolve_reversed(coeffs: &CellCoefficients, filter: &Filter) -> Result<CellCoefficients> {
    one_dimensional(coeffs)?;
    if filter.taps.is_empty() {
        return Err(Error::Empty("filter taps"));
    }
    let mut out = coeffs.clone();
    if coeffs.is_empty() {
        return Ok(out);
    }
    let (klo, khi) = (coeffs.window.lo[0], coeffs.window.hi[0]);
    let window = IndexWindow::new(vec![klo - filter.end()], vec![khi - filter.start]);
    out.values = (window.lo[0]..=window.hi[0])
        .map(|l| {
            let mut s = 0.0;
            for (i, v) in filter.taps.iter().enumerate() {
                let k = l + filter.start + i as i64;
                s += coeffs.get(&[k]) * v;
            }
            s
        })
        .collect();
    out.window = window;
    out.scheme = Scheme::CellAverage;
    Ok(out)
}

/// `Σ_k c_k ξ̂_k` with filtered noise `ξ̂_k = Σ_l v_{k-l} ξ_l`, computed through
/// the rearranged coefficients of [`convolve_reversed`].
pub fn sample_filtered(coeffs: &CellCoefficients, filter: &Filter, noise: &NoiseModel, n: usize, seed: SeedSpec) -> Result<SampleBatch> {
    let g = convolve_reversed(coeffs, filter)?;
    sample_integral(&g, noise, n, seed)
}

/// `Σ_k c_k ξ̂_k` evaluated literally: the filtered noise is formed cell by
/// cell from the same underlying field. Used to check the rearrangement.
pub fn sample_filtered_direct(coeffs: &CellCoefficients, filter: &Filter, noise: &NoiseModel, n: usize, seed: SeedSpec) -> Result<SampleBatch> {
    one_dimensional(coeffs)?;
    check_noise(coeffs, noise)?;
    let meta = BatchMeta {
        alpha: coeffs.alpha,
        h: coeffs.h,
        noise: *noise,
        seed,
        labels: vec!["f0".into()],
    };
    let mut values = vec![0.0; n];
    if !coeffs.is_empty() {
        let (klo, khi) = (coeffs.window.lo[0], coeffs.window.hi[0]);
        // ξ_l is needed for l in [klo - end, khi - start]
        let llo = klo - filter.end();
        let lhi = khi - filter.start;
        let sampler = noise.sampler();
        let per = sampler.u64s_per_draw();
        values.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let mut xi = vec![0.0; (lhi - llo + 1) as usize];
            for (i, slot) in chunk.iter_mut().enumerate() {
                let mut rng = seed.replicate_rng((c * CHUNK + i) as u64);
                seek_cell(&mut rng, cell_address(&[llo]), per);
                xi.iter_mut().for_each(|x| *x = sampler.draw(&mut rng));
                let mut s = 0.0;
                for k in klo..=khi {
                    let mut hat = 0.0;
                    for l in (k - filter.end())..=(k - filter.start) {
                        hat += filter.get(k - l) * xi[(l - llo) as usize];
                    }
                    s += coeffs.get(&[k]) * hat;
                }
                *slot = s;
            }
        });
    }
    Ok(SampleBatch {
        n_replicates: n,
        values,
        meta,
    })
}
