//! Acceptance run: nine criteria, one PASS/FAIL line each, with runtime limits.

use std::time::{Duration, Instant};

use serde_json::{json, Value};
use stablelat::lattice::{discretize_integrand, Scheme};
use stablelat::measure::{sample_filtered, sample_filtered_direct, Filter};
use stablelat::suites::{self, run_suite, SuiteName, SuiteOutput};
use stablelat::{CellCoefficients, FunctionSpec, NoiseModel, SeedSpec};

struct Outcome {
    id: u32,
    what: &'static str,
    pass: bool,
    elapsed: Duration,
    limit: Option<Duration>,
    detail: String,
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn suite_detail(out: &SuiteOutput) -> String {
    out.checks
        .iter()
        .map(|c| format!("{}={:.4e}{}", c.name, c.value, if c.pass { "" } else { " (fail)" }))
        .collect::<Vec<_>>()
        .join("; ")
}

// Composite Gauss–Legendre (5 nodes) on `n` equal panels.
fn gl5(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    const X: [f64; 5] = [0.0, 0.538_469_310_105_683_1, -0.538_469_310_105_683_1, 0.906_179_845_938_664, -0.906_179_845_938_664];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let w = (b - a) / n as f64;
    (0..n)
        .map(|i| {
            let c = a + w * (i as f64 + 0.5);
            X.iter().zip(&W).map(|(x, wt)| wt * f(c + 0.5 * w * x)).sum::<f64>() * 0.5 * w
        })
        .sum()
}

// Cell averages of the corpus functions computed independently of the library.
fn oracle_cell_integral(which: usize, lo: f64, hi: f64) -> f64 {
    let overlap = |a: f64, b: f64| (hi.min(b) - lo.max(a)).max(0.0);
    match which {
        0 => overlap(0.0, 1.0),
        1 => overlap(0.0, 1.0) - 0.5 * overlap(0.3, 2.2),
        _ => gl5(|x| (-0.5 * x * x).exp(), lo, hi, 16),
    }
}

fn corpus() -> Vec<(FunctionSpec, f64, f64)> {
    let two_box = FunctionSpec::combination([(1.0, FunctionSpec::indicator(0.0, 1.0)), (-0.5, FunctionSpec::indicator(0.3, 2.2))]);
    // (spec, oracle range, tolerance)
    vec![
        (FunctionSpec::indicator(0.0, 1.0), 3.0, 1e-12),
        (two_box, 4.0, 1e-8),
        (FunctionSpec::gauss(0.0, 1.0), 12.0, 1e-8),
    ]
}

fn criterion_norm_identity() -> (bool, String) {
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for (which, (spec, range, tol)) in corpus().into_iter().enumerate() {
        for &h in &[1.0, 0.5, 0.25, 0.125] {
            for &alpha in &[1.2, 1.5, 2.0] {
                let c = discretize_integrand(&spec, h, alpha, 1e-15, Scheme::CellAverage).unwrap();
                let lattice = c.alpha_mass();
                // ‖f_h‖^α = Σ_cells h·|cell average|^α
                let cells = (range / h).round() as i64;
                let oracle: f64 = (-cells..cells)
                    .map(|k| {
                        let (lo, hi) = (k as f64 * h, (k + 1) as f64 * h);
                        h * (oracle_cell_integral(which, lo, hi) / h).abs().powf(alpha)
                    })
                    .sum();
                let rel = (lattice - oracle).abs() / oracle;
                worst = worst.max(rel);
                pass &= rel <= tol;
            }
        }
    }
    (pass, format!("worst relative gap {worst:.3e}"))
}

fn criterion_filtered() -> (bool, String) {
    let c = CellCoefficients::from_values(
        0.5,
        1.5,
        Scheme::CellAverage,
        stablelat::lattice::IndexWindow::new(vec![-3], vec![4]),
        vec![0.3, -1.0, 2.0, 0.25, 0.0, 1.5, -0.75, 0.5],
    )
    .unwrap();
    let filter = Filter::new(0, vec![0.6, -0.4]).unwrap();
    let mut worst: f64 = 0.0;
    for noise in [NoiseModel::exact(1.5).unwrap(), NoiseModel::pareto(1.5).unwrap()] {
        let a = sample_filtered(&c, &filter, &noise, 20_000, SeedSpec::new(8, 0)).unwrap();
        let b = sample_filtered_direct(&c, &filter, &noise, 20_000, SeedSpec::new(8, 0)).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            worst = worst.max((x - y).abs() / (1.0 + y.abs()));
        }
    }
    (worst <= 1e-12, format!("max difference {worst:.3e}"))
}

#[test]
fn acceptance() {
    let single = pool(1);
    let mut results: Vec<Outcome> = Vec::new();
    let mut push = |id, what, limit: Option<u64>, ((pass, detail), elapsed): ((bool, String), Duration)| {
        results.push(Outcome { id, what, pass, elapsed, limit: limit.map(Duration::from_secs), detail });
    };

    push(1, "norm identity", Some(5), timed(criterion_norm_identity));

    let mut suite_runs: Vec<(SuiteName, Value, SuiteOutput)> = Vec::new();
    let mut run = |name: SuiteName, params: Value| -> (SuiteOutput, Duration) {
        let (out, t) = timed(|| single.install(|| run_suite(name, &params).unwrap()));
        suite_runs.push((name, params, out.clone()));
        (out, t)
    };

    let (out, t) = run(SuiteName::Exactness, json!({}));
    push(2, "exact scheme KS", Some(20), ((out.pass(), suite_detail(&out)), t));

    let (out, t) = run(SuiteName::CfConvergence, json!({}));
    push(3, "cf convergence", Some(120), ((out.pass(), suite_detail(&out)), t));

    let (out, t) = run(SuiteName::LfConditions, json!({}));
    let sigma_exact = out.evidence["conditions"]["sigma_target"] == json!(1.0);
    push(4, "lindeberg-feller harness", Some(60), ((out.pass() && sigma_exact, suite_detail(&out)), t));

    let ((pass5, d5), t5) = timed(|| {
        let g = FunctionSpec::gauss(0.0, 1.0);
        let inv: Vec<f64> = [0.3, 0.7].iter().map(|&b| suites::inversion_error(&g, b, stablelat::frac::Side::Plus).unwrap()).collect();
        let semi = suites::semigroup_error(&g, 0.3, 0.4, stablelat::frac::Side::Plus).unwrap();
        let march: Vec<f64> = [0.3, 0.7].iter().map(|&b| suites::marchaud_error(&g, b).unwrap()).collect();
        let pass = inv.iter().all(|e| *e <= 1e-3) && semi <= 1e-4 && march.iter().all(|e| *e <= 1e-5);
        (pass, format!("inversion [{}]; semigroup {semi:.3e}; marchaud [{}]", sci(&inv), sci(&march)))
    });
    push(5, "fractional identities", Some(30), ((pass5, d5), t5));

    let ((pass6, d6), t6) = timed(|| {
        let errs: Vec<f64> = [(0.3, 1.0, 0.0), (0.5, 0.0, 1.0), (0.7, 1.0, 1.0)]
            .iter()
            .map(|&(b, a, bb)| suites::kernel_consistency_error(b, a, bb).unwrap())
            .collect();
        (errs.iter().all(|e| *e <= 1e-6), format!("sup errors [{}]", sci(&errs)))
    });
    push(6, "lfsm kernel consistency", Some(30), ((pass6, d6), t6));

    let (out, t) = run(SuiteName::LfsmSelfsim, json!({}));
    push(7, "lfsm self-similarity and increments", Some(180), ((out.pass(), suite_detail(&out)), t));

    push(8, "filtered-noise rearrangement", Some(1), timed(criterion_filtered));

    let _ = run(SuiteName::FracIdentities, json!({}));

    let ((pass9, d9), t9) = timed(|| {
        let wide = pool(4);
        let mut mismatched = Vec::new();
        for (name, params, first) in &suite_runs {
            let again = wide.install(|| run_suite(*name, params).unwrap());
            if again.report_text() != first.report_text() || again.table().render() != first.table().render() {
                mismatched.push(name.as_str());
            }
        }
        (mismatched.is_empty(), format!("{} suites compared, mismatched: {mismatched:?}", suite_runs.len()))
    });
    push(9, "determinism across thread counts", None, ((pass9, d9), t9));

    let mut all = true;
    for r in &results {
        let in_time = r.limit.is_none_or(|l| r.elapsed <= l);
        let ok = r.pass && in_time;
        all &= ok;
        let limit = r.limit.map(|l| format!(" / limit {}s", l.as_secs())).unwrap_or_default();
        println!(
            "{} criterion {}: {} ({:.2}s{limit}{}) {}",
            if ok { "PASS" } else { "FAIL" },
            r.id,
            r.what,
            r.elapsed.as_secs_f64(),
            if in_time { "" } else { ", over time" },
            r.detail
        );
    }
    assert!(all, "acceptance criteria failed");
}
