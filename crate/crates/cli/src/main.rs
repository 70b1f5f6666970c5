//! `stablelat` command-line driver.
//!
//! Every subcommand resolves its parameters from an optional JSON config file
//! overlaid with flags, runs, and writes its output with the resolved config
//! echoed in the manifest. Exit codes: 0 success, 2 configuration error,
//! 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use stablelat::frac::{self, FracKernel, GridFunction, Side};
use stablelat::function::{lp_norm, Window};
use stablelat::io::Table;
use stablelat::lattice::{discretize_integrand, Scheme, DEFAULT_TRUNC_TOL};
use stablelat::lfsm::{sample_lfsm_path, LfsmParams, LFSM_TRUNC_TOL};
use stablelat::measure::sample_integral;
use stablelat::stable::NoiseKind;
use stablelat::suites::{run_suite, SuiteName, DEFAULT_SEED};
use stablelat::{Error, FunctionSpec, SeedSpec};

#[derive(Parser)]
#[command(name = "stablelat", version, about = "Lattice simulation of stable random measures and LFSM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the stable integral of a function.
    Sample(SampleArgs),
    /// Sample LFSM paths at given times.
    Path(PathArgs),
    /// Evaluate a fractional operator on a grid.
    Frac(FracArgs),
    /// Run a validation suite.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// JSON file with parameters; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    alpha: Option<f64>,
    /// Function spec: inline JSON or a path to a JSON file.
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// exact | pareto
    #[arg(long)]
    noise: Option<String>,
    /// cell-average | exact
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trunc_tol: Option<f64>,
}

#[derive(Args)]
struct PathArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "H")]
    hurst: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    /// Comma-separated, strictly increasing.
    #[arg(long)]
    times: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trunc_tol: Option<f64>,
}

#[derive(Args)]
struct FracArgs {
    #[command(flatten)]
    common: Common,
    /// integral | derivative | marchaud | convolve
    #[arg(long)]
    op: Option<String>,
    #[arg(long, conflicts_with = "delta")]
    beta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// + | - (plus | minus)
    #[arg(long, allow_hyphen_values = true)]
    side: Option<String>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    f: Option<String>,
    /// start:step:count
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    suite: String,
    /// Suite params: inline JSON or a path to a JSON file.
    #[arg(long)]
    params: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleConfig {
    alpha: f64,
    f: FunctionSpec,
    h: f64,
    #[serde(default = "default_n")]
    n: usize,
    #[serde(default = "default_noise")]
    noise: NoiseKind,
    #[serde(default = "default_scheme")]
    scheme: Scheme,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_trunc")]
    trunc_tol: f64,
    out: PathBuf,
    #[serde(default)]
    format: Format,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathConfig {
    alpha: f64,
    hurst: f64,
    #[serde(default = "one")]
    a: f64,
    #[serde(default)]
    b: f64,
    h: f64,
    times: Vec<f64>,
    #[serde(default = "default_n")]
    n: usize,
    #[serde(default = "default_noise")]
    noise: NoiseKind,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_lfsm_trunc")]
    trunc_tol: f64,
    out: PathBuf,
    #[serde(default)]
    format: Format,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FracOp {
    Integral,
    Derivative,
    Marchaud,
    Convolve,
}

#[derive(Debug, Serialize, Deserialize)]
struct GridSpec {
    start: f64,
    step: f64,
    count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FracConfig {
    op: FracOp,
    /// `δ` for the integral, `β` otherwise.
    order: f64,
    #[serde(default = "default_side")]
    side: Side,
    #[serde(default = "one")]
    a: f64,
    #[serde(default)]
    b: f64,
    f: FunctionSpec,
    grid: GridSpec,
    out: PathBuf,
    #[serde(default)]
    format: Format,
}

fn default_n() -> usize {
    1000
}
fn default_noise() -> NoiseKind {
    NoiseKind::Exact
}
fn default_scheme() -> Scheme {
    Scheme::CellAverage
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_trunc() -> f64 {
    DEFAULT_TRUNC_TOL
}
fn default_lfsm_trunc() -> f64 {
    LFSM_TRUNC_TOL
}
fn default_side() -> Side {
    Side::Plus
}
fn one() -> f64 {
    1.0
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn config_err(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

/// Inline JSON, or the contents of a file.
fn json_arg(s: &str) -> Outcome<Value> {
    let text = if s.trim_start().starts_with('{') || s.trim_start().starts_with('[') {
        s.to_string()
    } else {
        std::fs::read_to_string(s).map_err(|e| config_err(format!("{s}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| config_err(format!("invalid JSON in {s:?}: {e}")))
}

struct Overlay(Map<String, Value>);

impl Overlay {
    fn load(common: &Common) -> Outcome<Overlay> {
        let mut map = match &common.config {
            Some(p) => match json_arg(&p.to_string_lossy())? {
                Value::Object(m) => m,
                _ => return Err(config_err("config file must hold a JSON object")),
            },
            None => Map::new(),
        };
        if let Some(o) = &common.out {
            map.insert("out".into(), json!(o));
        }
        if let Some(f) = common.format {
            map.insert("format".into(), serde_json::to_value(f).unwrap());
        }
        Ok(Overlay(map))
    }

    fn set<T: Serialize>(&mut self, key: &str, v: Option<T>) {
        if let Some(v) = v {
            self.0.insert(key.into(), serde_json::to_value(v).expect("flag serializes"));
        }
    }

    fn set_parsed<T: std::str::FromStr<Err = Error> + Serialize>(&mut self, key: &str, v: Option<&String>) -> Outcome<()> {
        if let Some(s) = v {
            let t: T = s.parse()?;
            self.set(key, Some(t));
        }
        Ok(())
    }

    fn resolve<T: DeserializeOwned>(self) -> Outcome<T> {
        serde_json::from_value(Value::Object(self.0)).map_err(|e| config_err(format!("configuration: {e}")))
    }
}

fn parse_times(s: &str) -> Outcome<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| config_err(format!("bad time {t:?}"))))
        .collect()
}

fn parse_grid(s: &str) -> Outcome<GridSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(config_err("grid must be start:step:count"));
    }
    let bad = |_| config_err(format!("bad grid {s:?}"));
    Ok(GridSpec {
        start: parts[0].parse().map_err(bad)?,
        step: parts[1].parse().map_err(bad)?,
        count: parts[2].parse().map_err(|_| config_err(format!("bad grid count in {s:?}")))?,
    })
}

fn write_table(table: &Table, out: &Path, format: Format) -> Outcome<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| config_err(format!("{}: {e}", dir.display())))?;
    }
    let text = match format {
        Format::Csv => table.render(),
        Format::Json => table.render_json(),
    };
    std::fs::write(out, text).map_err(|e| config_err(format!("{}: {e}", out.display())))
}

fn manifest_config<T: Serialize>(table: &mut Table, cfg: &T) {
    table.annotate("config", serde_json::to_value(cfg).expect("config serializes"));
    table.annotate("version", json!(env!("CARGO_PKG_VERSION")));
}

fn cmd_sample(args: SampleArgs) -> Outcome<()> {
    let mut o = Overlay::load(&args.common)?;
    o.set("alpha", args.alpha);
    if let Some(f) = &args.f {
        o.set("f", Some(json_arg(f)?));
    }
    o.set("h", args.h);
    o.set("n", args.n);
    o.set_parsed::<NoiseKind>("noise", args.noise.as_ref())?;
    o.set_parsed::<Scheme>("scheme", args.scheme.as_ref())?;
    o.set("seed", args.seed);
    o.set("trunc_tol", args.trunc_tol);
    let cfg: SampleConfig = o.resolve()?;

    cfg.f.validate()?;
    if let Some(a) = cfg.f.kernel_alphas().into_iter().find(|a| *a != cfg.alpha) {
        return Err(config_err(format!("the spec contains an LFSM kernel with alpha {a}, but --alpha is {}", cfg.alpha)));
    }
    let noise = cfg.noise.model(cfg.alpha)?;
    let coeffs = discretize_integrand(&cfg.f, cfg.h, cfg.alpha, cfg.trunc_tol, cfg.scheme)?;
    let batch = sample_integral(&coeffs, &noise, cfg.n, SeedSpec::new(cfg.seed, 0))?;
    let mut table = batch.to_table();
    manifest_config(&mut table, &cfg);
    let (la, li) = coeffs.norms();
    table.annotate("coefficients", json!({ "cells": coeffs.len(), "l_alpha": la, "l_inf": li, "tail_mass_bound": coeffs.tail_mass_bound }));
    write_table(&table, &cfg.out, cfg.format)
}

fn cmd_path(args: PathArgs) -> Outcome<()> {
    let mut o = Overlay::load(&args.common)?;
    o.set("alpha", args.alpha);
    o.set("hurst", args.hurst);
    o.set("a", args.a);
    o.set("b", args.b);
    o.set("h", args.h);
    if let Some(t) = &args.times {
        o.set("times", Some(parse_times(t)?));
    }
    o.set("n", args.n);
    o.set_parsed::<NoiseKind>("noise", args.noise.as_ref())?;
    o.set("seed", args.seed);
    o.set("trunc_tol", args.trunc_tol);
    let cfg: PathConfig = o.resolve()?;

    let params = LfsmParams::new(cfg.alpha, cfg.hurst, cfg.a, cfg.b)?;
    let noise = cfg.noise.model(cfg.alpha)?;
    let batch = sample_lfsm_path(&params, &cfg.times, cfg.h, cfg.trunc_tol, &noise, cfg.n, SeedSpec::new(cfg.seed, 0))?;
    let mut table = batch.to_table();
    manifest_config(&mut table, &cfg);
    table.annotate("lfsm", json!({ "alpha": cfg.alpha, "hurst": cfg.hurst, "a": cfg.a, "b": cfg.b, "h": cfg.h, "seed": cfg.seed }));
    if cfg.alpha == 2.0 && cfg.n > 1 {
        // Gaussian case: Var X_t = 2‖f_t‖²
        let summary = cfg
            .times
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let col = batch.column(j);
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
                let norm = lp_norm(&params.path_kernel(t), 2.0, &Window::Auto)?;
                Ok(json!({ "t": t, "sample_variance": var, "expected_variance": 2.0 * norm * norm }))
            })
            .collect::<Result<Vec<_>, Error>>()?;
        table.annotate("summary", Value::Array(summary));
    }
    write_table(&table, &cfg.out, cfg.format)
}

fn cmd_frac(args: FracArgs) -> Outcome<()> {
    let mut o = Overlay::load(&args.common)?;
    if let Some(op) = &args.op {
        let op = match op.as_str() {
            "integral" => FracOp::Integral,
            "derivative" => FracOp::Derivative,
            "marchaud" => FracOp::Marchaud,
            "convolve" => FracOp::Convolve,
            other => return Err(config_err(format!("unknown op {other:?}"))),
        };
        o.set("op", Some(op));
    }
    o.set("order", args.beta.or(args.delta));
    o.set_parsed::<Side>("side", args.side.as_ref())?;
    o.set("a", args.a);
    o.set("b", args.b);
    if let Some(f) = &args.f {
        o.set("f", Some(json_arg(f)?));
    }
    if let Some(g) = &args.grid {
        o.set("grid", Some(parse_grid(g)?));
    }
    let cfg: FracConfig = o.resolve()?;

    let f = &cfg.f;
    if f.validate()? != 1 {
        return Err(config_err("fractional operators act on one-dimensional functions"));
    }
    let grid = GridFunction::template(cfg.grid.start, cfg.grid.step, cfg.grid.count)?;
    let (order, side) = (cfg.order, cfg.side);
    let result = match cfg.op {
        FracOp::Integral => grid.map(|x| frac::rl_integral(f, order, side, x))?,
        FracOp::Derivative => grid.map(|x| frac::rl_derivative(f, order, side, x))?,
        FracOp::Marchaud => grid.map(|x| frac::marchaud_derivative(f, order, side, x))?,
        FracOp::Convolve => frac::convolve_kernel(f, &FracKernel::new(order, cfg.a, cfg.b)?, &grid)?,
    };
    let mut table = result.to_table();
    manifest_config(&mut table, &cfg);
    write_table(&table, &cfg.out, cfg.format)
}

fn cmd_validate(args: ValidateArgs) -> Outcome<()> {
    let suite: SuiteName = args.suite.parse()?;
    let mut params = match &args.params {
        Some(p) => json_arg(p)?,
        None => json!({}),
    };
    if let Some(seed) = args.seed {
        if suite == SuiteName::FracIdentities {
            return Err(config_err("the frac-identities suite is deterministic and takes no seed"));
        }
        match &mut params {
            Value::Object(m) => {
                m.insert("seed".into(), json!(seed));
            }
            _ => return Err(config_err("suite params must be a JSON object")),
        }
    }
    let out = run_suite(suite, &params)?;
    let (json_path, csv_path) = out.write_to(&args.out)?;
    for c in &out.checks {
        println!("{} {}: {} (threshold {})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
    }
    println!(
        "{} {} -> {}, {}",
        if out.pass() { "PASS" } else { "FAIL" },
        suite.as_str(),
        json_path.display(),
        csv_path.display()
    );
    Ok(())
}

fn init_threads() -> Outcome<()> {
    if let Ok(v) = std::env::var("STABLELAT_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| config_err(format!("STABLELAT_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_err(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = init_threads().and_then(|_| match cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Path(a) => cmd_path(a),
        Command::Frac(a) => cmd_frac(a),
        Command::Validate(a) => cmd_validate(a),
    });
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
    }
}
