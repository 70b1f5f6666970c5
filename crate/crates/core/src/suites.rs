//! Named validation suites. Each run yields a JSON report with the numeric
//! evidence and a flat table of checks, both deterministic given the params.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::frac::{marchaud_derivative, rl_derivative, rl_integral, FracKernel, RealFn, RlIntegralFn, Side};
use crate::function::{lp_norm, FunctionSpec, Window};
use crate::io::{fmt_f64, Table};
use crate::lattice::{discretize, CellCoefficients, IndexWindow, Scheme, DEFAULT_TRUNC_TOL};
use crate::lfsm::{sample_lfsm_path, LfsmParams, LFSM_TRUNC_TOL};
use crate::measure::sample_integral;
use crate::rng::SeedSpec;
use crate::stable::{sample_sas, NoiseKind, StableParams};
use crate::validate::{
    convergence_study, default_thetas, empirical_cf, ks_two_sample, lf_conditions, quantiles, LfCriteria, KS_LEVEL,
};

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SuiteName {
    CfConvergence,
    Exactness,
    LfsmSelfsim,
    LfConditions,
    FracIdentities,
}

impl SuiteName {
    pub const ALL: [SuiteName; 5] = [
        SuiteName::CfConvergence,
        SuiteName::Exactness,
        SuiteName::LfsmSelfsim,
        SuiteName::LfConditions,
        SuiteName::FracIdentities,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::CfConvergence => "cf-convergence",
            SuiteName::Exactness => "exactness",
            SuiteName::LfsmSelfsim => "lfsm-selfsim",
            SuiteName::LfConditions => "lf-conditions",
            SuiteName::FracIdentities => "frac-identities",
        }
    }
}

impl FromStr for SuiteName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SuiteName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::param(format!("unknown suite {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "==")]
    Holds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Check {
        Check { name: name.into(), value, relation: Relation::AtMost, threshold, pass: value <= threshold }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Check {
        Check { name: name.into(), value, relation: Relation::AtLeast, threshold, pass: value >= threshold }
    }

    pub fn holds(name: impl Into<String>, ok: bool) -> Check {
        let v = if ok { 1.0 } else { 0.0 };
        Check { name: name.into(), value: v, relation: Relation::Holds, threshold: 1.0, pass: ok }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteOutput {
    pub suite: SuiteName,
    pub params: Value,
    pub checks: Vec<Check>,
    pub evidence: Value,
}

impl SuiteOutput {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn report(&self) -> Value {
        json!({
            "suite": self.suite.as_str(),
            "pass": self.pass(),
            "params": self.params,
            "checks": self.checks,
            "evidence": self.evidence,
        })
    }

    pub fn report_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report()).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn table(&self) -> Table {
        let manifest = json!({
            "kind": "suite_checks",
            "suite": self.suite.as_str(),
            "pass": self.pass(),
            "params": self.params,
        });
        let mut t = Table::new(manifest, ["check", "value", "relation", "threshold", "pass"].map(String::from).to_vec());
        for c in &self.checks {
            let rel = match c.relation {
                Relation::AtMost => "<=",
                Relation::AtLeast => ">=",
                Relation::Holds => "==",
            };
            t.rows.push(vec![c.name.clone(), fmt_f64(c.value), rel.into(), fmt_f64(c.threshold), c.pass.to_string()]);
        }
        t
    }

    /// Writes `<suite>.json` and `<suite>.csv` into `dir`; returns both paths.
    pub fn write_to(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let json_path = dir.join(format!("{}.json", self.suite.as_str()));
        let csv_path = dir.join(format!("{}.csv", self.suite.as_str()));
        std::fs::write(&json_path, self.report_text())?;
        self.table().write_to(&csv_path)?;
        Ok((json_path, csv_path))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfRun {
    pub alpha: f64,
    pub noise: NoiseKind,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfConvergenceParams {
    pub spec: FunctionSpec,
    pub scheme: Scheme,
    pub h_list: Vec<f64>,
    pub n: usize,
    pub runs: Vec<CfRun>,
    pub seed: u64,
}

impl Default for CfConvergenceParams {
    fn default() -> Self {
        CfConvergenceParams {
            spec: FunctionSpec::gauss(0.0, 1.0),
            scheme: Scheme::CellAverage,
            h_list: (2..=6).map(|j| 2f64.powi(-j)).collect(),
            n: 100_000,
            runs: vec![
                CfRun { alpha: 1.2, noise: NoiseKind::Pareto, bound: 0.03 },
                CfRun { alpha: 1.5, noise: NoiseKind::Exact, bound: 0.02 },
            ],
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactnessParams {
    pub alpha: f64,
    pub h: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub seed: u64,
}

impl Default for ExactnessParams {
    fn default() -> Self {
        ExactnessParams { alpha: 1.5, h: 0.25, lower: 0.0, upper: 1.0, n: 200_000, seed: DEFAULT_SEED }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LfsmSelfsimParams {
    pub alpha: f64,
    pub hurst: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub h: f64,
    pub n: usize,
    pub noise: NoiseKind,
    pub trunc_tol: f64,
    pub quantile_tol: f64,
    pub seed: u64,
}

impl Default for LfsmSelfsimParams {
    fn default() -> Self {
        LfsmSelfsimParams {
            alpha: 1.5,
            hurst: vec![0.7, 0.4],
            a: 1.0,
            b: 0.0,
            h: 2f64.powi(-5),
            n: 100_000,
            noise: NoiseKind::Exact,
            trunc_tol: LFSM_TRUNC_TOL,
            quantile_tol: 0.05,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LfFamily {
    /// `u^{(j)}_k = j^{-1/α} 1{k ≤ j}`.
    Block,
    /// `u^{(j)} = (1, 0, 0, …)` for every `j`.
    Constant,
    /// Cell averages of `GaussBump(0, 1)` at `h = 2^{-j}`.
    Gauss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LfConditionsParams {
    pub family: LfFamily,
    pub alpha: f64,
    pub js: Vec<u32>,
    /// Replicates for the CF check on the last family; 0 skips sampling.
    pub n: usize,
    pub noise: NoiseKind,
    pub bound: f64,
    pub seed: u64,
}

impl Default for LfConditionsParams {
    fn default() -> Self {
        LfConditionsParams {
            family: LfFamily::Block,
            alpha: 1.5,
            js: vec![10, 100, 1000, 10_000],
            n: 100_000,
            noise: NoiseKind::Pareto,
            bound: 0.02,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FracIdentitiesParams {
    pub inversion_betas: Vec<f64>,
    pub inversion_tol: f64,
    pub semigroup_tol: f64,
    pub marchaud_betas: Vec<f64>,
    pub marchaud_tol: f64,
    /// `(β, a, b)` triples for the indicator convolution check.
    pub kernels: Vec<(f64, f64, f64)>,
    pub kernel_tol: f64,
}

impl Default for FracIdentitiesParams {
    fn default() -> Self {
        FracIdentitiesParams {
            inversion_betas: vec![0.3, 0.7],
            inversion_tol: 1e-3,
            semigroup_tol: 1e-4,
            marchaud_betas: vec![0.3, 0.7],
            marchaud_tol: 1e-5,
            kernels: vec![(0.3, 1.0, 0.0), (0.5, 0.0, 1.0), (0.7, 1.0, 1.0)],
            kernel_tol: 1e-6,
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// `D^β I^β f = f` on `[-3, 3]`: relative discrete `L²` error.
pub fn inversion_error(f: &FunctionSpec, beta: f64, side: Side) -> Result<f64> {
    let i = RlIntegralFn::new(f, beta, side)?;
    let (mut num, mut den) = (0.0, 0.0);
    for x in linspace(-3.0, 3.0, 61) {
        let back = rl_derivative(&i, beta, side, x)?;
        let v = f.value(x);
        num += (back - v).powi(2);
        den += v * v;
    }
    Ok((num / den).sqrt())
}

/// `sup |I^{δ1} I^{δ2} f - I^{δ1+δ2} f|` over 100 points of `[-3, 3]`.
pub fn semigroup_error(f: &FunctionSpec, d1: f64, d2: f64, side: Side) -> Result<f64> {
    let inner = RlIntegralFn::new(f, d2, side)?;
    let mut sup: f64 = 0.0;
    for x in linspace(-3.0, 3.0, 100) {
        let lhs = rl_integral(&inner, d1, side, x)?;
        let rhs = rl_integral(f, d1 + d2, side, x)?;
        sup = sup.max((lhs - rhs).abs());
    }
    Ok(sup)
}

/// `sup |D^β_M f - D^β f|` (Marchaud against Riemann–Liouville) on both sides
/// at 21 points of `[-2, 2]`.
pub fn marchaud_error(f: &FunctionSpec, beta: f64) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for side in [Side::Plus, Side::Minus] {
        for x in linspace(-2.0, 2.0, 21) {
            let m = marchaud_derivative(f, beta, side, x)?;
            let r = rl_derivative(f, beta, side, x)?;
            sup = sup.max((m - r).abs());
        }
    }
    Ok(sup)
}

/// Grid used for the indicator convolution check: 50 points of `[-1.98, 2.92]`.
pub fn kernel_grid() -> Vec<f64> {
    (0..50).map(|i| -1.98 + 0.1 * i as f64).collect()
}

/// `sup |(1_{[0,1]} ∗ w)(x) - closed form|` over [`kernel_grid`].
pub fn kernel_consistency_error(beta: f64, a: f64, b: f64) -> Result<f64> {
    let k = FracKernel::new(beta, a, b)?;
    let f = FunctionSpec::indicator(0.0, 1.0);
    let mut sup: f64 = 0.0;
    for x in kernel_grid() {
        let num = k.convolve_at(&f, x)?;
        sup = sup.max((num - k.indicator_convolution(1.0, x)).abs());
    }
    Ok(sup)
}

fn parse_params<T: DeserializeOwned + Serialize>(v: &Value) -> Result<(T, Value)> {
    let p: T = serde_json::from_value(v.clone()).map_err(|e| Error::param(format!("suite params: {e}")))?;
    let echo = serde_json::to_value(&p)?;
    Ok((p, echo))
}

/// Runs a suite with params given as a JSON object; missing fields take defaults.
pub fn run_suite(name: SuiteName, params: &Value) -> Result<SuiteOutput> {
    let params = if params.is_null() { json!({}) } else { params.clone() };
    match name {
        SuiteName::CfConvergence => {
            let (p, echo) = parse_params(&params)?;
            cf_convergence(&p, echo)
        }
        SuiteName::Exactness => {
            let (p, echo) = parse_params(&params)?;
            exactness(&p, echo)
        }
        SuiteName::LfsmSelfsim => {
            let (p, echo) = parse_params(&params)?;
            lfsm_selfsim(&p, echo)
        }
        SuiteName::LfConditions => {
            let (p, echo) = parse_params(&params)?;
            lf_conditions_suite(&p, echo)
        }
        SuiteName::FracIdentities => {
            let (p, echo) = parse_params(&params)?;
            frac_identities(&p, echo)
        }
    }
}

fn cf_convergence(p: &CfConvergenceParams, echo: Value) -> Result<SuiteOutput> {
    let mut checks = Vec::new();
    let mut runs = Vec::new();
    for (i, run) in p.runs.iter().enumerate() {
        let noise = run.noise.model(run.alpha)?;
        let seed = SeedSpec::new(p.seed, 0).child(i as u64);
        let study = convergence_study(&p.spec, run.alpha, &noise, p.scheme, &p.h_list, p.n, &default_thetas(), seed)?;
        let tag = format!("alpha={} {:?}", run.alpha, run.noise).to_lowercase();
        checks.push(Check::holds(format!("{tag} non-increasing to band"), study.monotone()));
        if let Some(last) = study.last_distance() {
            checks.push(Check::at_most(format!("{tag} final sup distance"), last, run.bound));
        }
        runs.push(serde_json::to_value(&study)?);
    }
    Ok(SuiteOutput { suite: SuiteName::CfConvergence, params: echo, checks, evidence: json!({ "studies": runs }) })
}

fn exactness(p: &ExactnessParams, echo: Value) -> Result<SuiteOutput> {
    let f = FunctionSpec::indicator(p.lower, p.upper);
    let c = crate::lattice::discretize_exact(&f, p.h, p.alpha, DEFAULT_TRUNC_TOL)?;
    let noise = NoiseKind::Exact.model(p.alpha)?;
    let seed = SeedSpec::new(p.seed, 0);
    let batch = sample_integral(&c, &noise, p.n, seed.child(0))?;
    let sigma = (p.upper - p.lower).max(0.0).powf(1.0 / p.alpha);
    let target = StableParams::new(p.alpha, sigma)?;
    let reference = sample_sas(&target, p.n, seed.child(1));
    let ks = ks_two_sample(&batch.values, &reference)?;
    let ecf = empirical_cf(&batch.values, &default_thetas(), &target)?;
    let checks = vec![
        Check::at_least("ks p-value vs reference", ks.p_value, KS_LEVEL),
        Check::at_most("sup cf distance", ecf.sup_distance, ecf.band),
    ];
    let evidence = json!({ "sigma": sigma, "ks": ks, "ecf": ecf, "cells": c.len() });
    Ok(SuiteOutput { suite: SuiteName::Exactness, params: echo, checks, evidence })
}

/// Quantile levels `0.1, …, 0.9`.
pub fn decile_levels() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Self-similarity error per decile: `|q_p(X_2) - 2^H q_p(X_1)|` relative to
/// `|2^H q_p(X_1)|`. The median of a symmetric law is near 0, so there the
/// difference is taken relative to the interquartile range instead.
pub fn selfsim_errors(x1: &[f64], x2: &[f64], hurst: f64) -> Result<Vec<(f64, f64, f64, f64)>> {
    let levels = decile_levels();
    let scale = 2f64.powf(hurst);
    let q1 = quantiles(x1, &levels)?;
    let q2 = quantiles(x2, &levels)?;
    let iqr = quantiles(x1, &[0.25, 0.75])?;
    let iqr = scale * (iqr[1] - iqr[0]);
    Ok(levels
        .iter()
        .zip(q1.iter().zip(&q2))
        .map(|(&p, (&a, &b))| {
            let target = scale * a;
            let denom = if (p - 0.5).abs() < 1e-9 { iqr } else { target.abs() };
            (p, b, target, (b - target).abs() / denom)
        })
        .collect())
}

fn lfsm_selfsim(p: &LfsmSelfsimParams, echo: Value) -> Result<SuiteOutput> {
    let mut checks = Vec::new();
    let mut runs = Vec::new();
    for (i, &hurst) in p.hurst.iter().enumerate() {
        let params = LfsmParams::new(p.alpha, hurst, p.a, p.b)?;
        let noise = p.noise.model(p.alpha)?;
        let seed = SeedSpec::new(p.seed, 0).child(i as u64);
        let batch = sample_lfsm_path(&params, &[1.0, 2.0], p.h, p.trunc_tol, &noise, p.n, seed)?;
        let (x1, x2) = (batch.column(0), batch.column(1));
        let rows = selfsim_errors(&x1, &x2, hurst)?;
        let worst = rows.iter().map(|r| r.3).fold(0.0, f64::max);
        let incr: Vec<f64> = x2.iter().zip(&x1).map(|(b, a)| b - a).collect();
        let ks = ks_two_sample(&incr, &x1)?;
        checks.push(Check::at_most(format!("H={hurst} worst decile error"), worst, p.quantile_tol));
        checks.push(Check::at_least(format!("H={hurst} ks p-value X2-X1 vs X1"), ks.p_value, KS_LEVEL));
        let deciles: Vec<Value> = rows
            .iter()
            .map(|(p, q2, t, e)| json!({ "p": p, "q_x2": q2, "target": t, "error": e }))
            .collect();
        runs.push(json!({ "hurst": hurst, "deciles": deciles, "ks": ks }));
    }
    Ok(SuiteOutput { suite: SuiteName::LfsmSelfsim, params: echo, checks, evidence: json!({ "runs": runs }) })
}

fn block_family(alpha: f64, j: u32) -> Result<CellCoefficients> {
    let j = j.max(1);
    CellCoefficients::from_values(
        1.0,
        alpha,
        Scheme::CellAverage,
        IndexWindow::new(vec![1], vec![j as i64]),
        vec![(j as f64).powf(-1.0 / alpha); j as usize],
    )
}

fn lf_conditions_suite(p: &LfConditionsParams, echo: Value) -> Result<SuiteOutput> {
    let (seq, sigma) = match p.family {
        LfFamily::Block => (p.js.iter().map(|&j| block_family(p.alpha, j)).collect::<Result<Vec<_>>>()?, 1.0),
        LfFamily::Constant => {
            let one = CellCoefficients::from_values(1.0, p.alpha, Scheme::CellAverage, IndexWindow::new(vec![1], vec![3]), vec![1.0, 0.0, 0.0])?;
            (vec![one; p.js.len()], 1.0)
        }
        LfFamily::Gauss => {
            let g = FunctionSpec::gauss(0.0, 1.0);
            let seq = p
                .js
                .iter()
                .map(|&j| discretize(&g, 2f64.powi(-(j as i32)), p.alpha, DEFAULT_TRUNC_TOL))
                .collect::<Result<Vec<_>>>()?;
            (seq, lp_norm(&g, p.alpha, &Window::Auto)?)
        }
    };
    let report = lf_conditions(&seq, sigma, LfCriteria::default())?;
    let mut checks = vec![Check::holds("condition 1 (l^alpha norms converge)", report.condition1), Check::holds("condition 2 (l^inf norms vanish)", report.condition2)];
    let mut ecf = Value::Null;
    if p.n > 0 {
        let last = seq.last().expect("at least 3 families");
        let noise = p.noise.model(p.alpha)?;
        let batch = sample_integral(last, &noise, p.n, SeedSpec::new(p.seed, 0))?;
        let r = empirical_cf(&batch.values, &default_thetas(), &StableParams::new(p.alpha, sigma)?)?;
        checks.push(Check::at_most("sup cf distance for the last family", r.sup_distance, p.bound));
        ecf = json!({ "sup_distance": r.sup_distance, "band": r.band, "n": r.n });
    }
    Ok(SuiteOutput { suite: SuiteName::LfConditions, params: echo, checks, evidence: json!({ "conditions": report, "ecf": ecf }) })
}

fn frac_identities(p: &FracIdentitiesParams, echo: Value) -> Result<SuiteOutput> {
    let g = FunctionSpec::gauss(0.0, 1.0);
    let mut checks = Vec::new();
    for &beta in &p.inversion_betas {
        checks.push(Check::at_most(format!("inversion beta={beta}"), inversion_error(&g, beta, Side::Plus)?, p.inversion_tol));
    }
    checks.push(Check::at_most("semigroup 0.3+0.4", semigroup_error(&g, 0.3, 0.4, Side::Plus)?, p.semigroup_tol));
    for &beta in &p.marchaud_betas {
        checks.push(Check::at_most(format!("marchaud vs rl beta={beta}"), marchaud_error(&g, beta)?, p.marchaud_tol));
    }
    for &(beta, a, b) in &p.kernels {
        checks.push(Check::at_most(
            format!("indicator convolution beta={beta} a={a} b={b}"),
            kernel_consistency_error(beta, a, b)?,
            p.kernel_tol,
        ));
    }
    let evidence = json!({ "function": g, "grid_points": { "inversion": 61, "semigroup": 100, "marchaud": 21, "kernel": 50 } });
    Ok(SuiteOutput { suite: SuiteName::FracIdentities, params: echo, checks, evidence })
}
