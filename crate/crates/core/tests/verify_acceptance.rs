//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use swimstat::criteria::{Category, Criterion};
use swimstat::estimation::{
    empirical_stats, fit_lognormal, hazen_percentile, mean_sd, sampling_coefficients, FitOptions,
    SmallSampleFactors,
};
use swimstat::simulate::{
    lognormal_series, replication_rng, run_state_experiment, ScenarioSpec, StateOptions, Truth,
};
use swimstat::trend::{fit_trend, trend_se, years_between};
use swimstat::{CensorPolicy, Criteria, Reading, Sample};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Published sampling coefficient rows `(p, c, d, factor)`.
const TABLE: [(f64, f64, f64, f64); 6] = [
    (0.5, 1.253, 1.0, 1.570),
    (0.66, 1.293, 1.042, 1.540),
    (0.7, 1.318, 1.067, 1.526),
    (0.8, 1.429, 1.163, 1.510),
    (0.9, 1.709, 1.350, 1.603),
    (0.95, 2.113, 1.534, 1.897),
];

fn sampling_table() -> Outcome {
    let tol = 1e-3;
    let mut bad = Vec::new();
    for (p, c, d, f) in TABLE {
        let s = sampling_coefficients(p).unwrap();
        for (name, got, want) in [("c", s.c, c), ("d", s.d, d), ("factor", s.factor, f)] {
            if (got - want).abs() > tol {
                bad.push(format!("p={p} {name}={got:.5} vs {want}"));
            }
        }
    }
    let ok = bad.is_empty();
    outcome(
        ok,
        if ok {
            "18/18 cells within 0.001".into()
        } else {
            bad.join("; ")
        },
    )
}

fn false_pass_rates() -> Outcome {
    let spec = ScenarioSpec {
        truth: Truth::Percentiles {
            median: 150.0,
            p95: 1750.0,
        },
        trend: 0.0,
        samples_per_year: 12.0,
        years: 5.0,
        replications: 100_000,
        seed: 2,
        censor_above: None,
    };
    let start = Instant::now();
    let r = run_state_experiment(
        &spec,
        1200.0,
        &Criteria::default(),
        &StateOptions::default(),
    )
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (pct, par) = (r.percentile.false_pass.rate, r.parametric.false_pass.rate);
    let ok = (pct - 0.18).abs() <= 0.02 && (par - 0.10).abs() <= 0.02 && secs < 60.0;
    outcome(
        ok,
        format!("percentile {pct:.4}, parametric {par:.4}, {secs:.1} s"),
    )
}

fn trend_detectability() -> Outcome {
    let cases: [(f64, f64, f64); 4] = [
        (10.0, 12.0, 0.047),
        (10.0, 52.0, 0.023),
        (5.0, 12.0, 0.13),
        (5.0, 52.0, 0.064),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (years, per_year, want) in cases {
        let got = trend_se(1.5, years, per_year).unwrap();
        let digits = 1 - want.log10().floor() as i32;
        let scale = 10f64.powi(digits);
        ok &= ((got * scale).round() - want * scale).abs() < 1e-9;
        parts.push(format!("{got:.4}"));
    }
    outcome(ok, parts.join(", "))
}

const R: usize = 100_000;

fn standard_normal_reps(n: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..R)
        .into_par_iter()
        .map(|r| {
            let mut rng = replication_rng(seed, r as u64);
            (0..n).map(|_| rng.sample(StandardNormal)).collect()
        })
        .collect()
}

fn hazen_bias() -> Outcome {
    let z95 = common::z(0.95);
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, want, seed) in [(12, -0.07, 1001), (60, -0.008, 1002)] {
        let bias: Vec<f64> = standard_normal_reps(n, seed)
            .into_iter()
            .map(|mut xs| {
                xs.sort_by(f64::total_cmp);
                hazen_percentile(&xs, 0.95).unwrap() - z95
            })
            .collect();
        let (m, se) = common::mean_se(&bias);
        ok &= (m - want).abs() <= 3.0 * se;
        parts.push(format!("n={n}: {m:.4}σ ± {se:.4} vs {want}"));
    }
    outcome(ok, parts.join("; "))
}

fn unbiased_percentile() -> Outcome {
    let (mu, sigma) = (5.0, 1.5);
    let z95 = common::z(0.95);
    let target = mu + z95 * sigma;
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, seed) in [(12, 1003), (60, 1004)] {
        let alpha = SmallSampleFactors::new(n).unwrap().alpha;
        let est: Vec<f64> = standard_normal_reps(n, seed)
            .into_iter()
            .map(|xs| {
                let logs: Vec<f64> = xs.iter().map(|x| mu + sigma * x).collect();
                let (m, s) = mean_sd(&logs);
                m + alpha * s * z95
            })
            .collect();
        let (m, se) = common::mean_se(&est);
        ok &= (m - target).abs() <= 3.0 * se;
        parts.push(format!("n={n}: {:+.4} ± {se:.4}", m - target));
    }
    outcome(ok, parts.join("; "))
}

fn censoring_order() -> Outcome {
    let sites = 100;
    let bound = 500.0;
    let start = NaiveDate::from_ymd_opt(2010, 1, 10).unwrap();
    let opts = FitOptions::default();
    let ordered: Vec<bool> = (0..sites)
        .into_par_iter()
        .map(|k| {
            let mut rng = replication_rng(1006, k as u64);
            let samples: Vec<Sample> =
                lognormal_series(&mut rng, start, 5.0, 1.0, 0.1, 12.0, 120, None)
                    .into_iter()
                    .map(|s| match s.reading {
                        Reading::Exact(v) if v > bound && years_between(start, s.date) >= 5.0 => {
                            Sample::new(s.date, Reading::Above(bound))
                        }
                        _ => s,
                    })
                    .collect();
            let slope = |p| fit_trend(&samples, p, &opts).unwrap().slope;
            let (d, c, i) = (
                slope(CensorPolicy::Drop),
                slope(CensorPolicy::Clamp),
                slope(CensorPolicy::Impute),
            );
            d < c && c < i
        })
        .collect();
    let hits = ordered.iter().filter(|&&b| b).count();
    outcome(
        hits * 100 >= 95 * sites,
        format!("{hits}/{sites} sites ordered drop < clamp < impute"),
    )
}

fn classifier_oracle() -> Outcome {
    let c = Criteria::default();
    let mut rng = replication_rng(1007, 0);
    let mut agree = 0;
    let total = 1000;
    for _ in 0..total {
        let sigma = rng.random_range(0.2..3.0);
        let mu = rng.random_range(1.0..9.0);
        if c.classify_parametric(mu, sigma).unwrap() == common::table_category(mu, sigma) {
            agree += 1;
        }
    }
    outcome(agree == total, format!("{agree}/{total} agree"))
}

/// Large-sample coefficient of each criterion's estimate, in units of `σ/√n` on the μ scale.
fn criterion_coefficient(c: Criterion) -> f64 {
    let coef = |p: f64| (p * (1.0 - p)).sqrt() / common::phi(common::z(p));
    match c {
        Criterion::P50 => coef(0.5),
        Criterion::P95 => coef(0.95),
        Criterion::G260 => [0.8, 0.66, 0.5].map(coef).into_iter().fold(0.0, f64::max),
        Criterion::G540 => [0.95, 0.9, 0.8, 0.7]
            .map(coef)
            .into_iter()
            .fold(0.0, f64::max),
    }
}

/// True if every criterion can move by its own margin (at least 0.05 in μ)
/// in either direction without changing the overall category.
fn robust_point(c: &Criteria, mu: f64, sigma: f64, n: usize) -> bool {
    let criteria = [
        Criterion::P50,
        Criterion::P95,
        Criterion::G260,
        Criterion::G540,
    ];
    let margin =
        |k: Criterion| (4.5 * criterion_coefficient(k) * sigma / (n as f64).sqrt()).max(0.05);
    let base = c.classify_parametric(mu, sigma).unwrap();
    (0..16u32).all(|mask| {
        criteria
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let shift = if mask & (1 << i) != 0 {
                    margin(k)
                } else {
                    -margin(k)
                };
                let bands = c.parametric_bands(mu + shift, sigma).unwrap();
                match k {
                    Criterion::P50 => bands.p50,
                    Criterion::P95 => bands.p95.unwrap(),
                    Criterion::G260 => bands.g260,
                    Criterion::G540 => bands.g540,
                }
            })
            .max()
            .unwrap()
            == base
    })
}

fn large_sample_agreement() -> Outcome {
    let c = Criteria::default();
    let n = 10_000;
    let mut rng = replication_rng(1008, 0);
    let mut points: Vec<(f64, f64, Category)> = Vec::new();
    let mut per_cat = [0usize; 5];
    let mut attempts = 0;
    while points.len() < 50 && attempts < 1_000_000 {
        attempts += 1;
        let sigma = rng.random_range(0.2..3.0);
        let mu = rng.random_range(1.0..9.0);
        let cat = c.classify_parametric(mu, sigma).unwrap();
        if per_cat[cat.index()] < 10 && robust_point(&c, mu, sigma, n) {
            per_cat[cat.index()] += 1;
            points.push((mu, sigma, cat));
        }
    }
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
    let opts = FitOptions::default();
    let agree: usize = points
        .par_iter()
        .enumerate()
        .map(|(i, &(mu, sigma, _))| {
            (0..100)
                .filter(|&t| {
                    let mut rng = replication_rng(1009 + i as u64, t);
                    let s = lognormal_series(&mut rng, start, mu, sigma, 0.0, 365.25, n, None);
                    let pct = c.classify_percentile(
                        &empirical_stats(&s, CensorPolicy::Clamp, &opts).unwrap(),
                        false,
                    );
                    let p = fit_lognormal(&s, CensorPolicy::Impute, &opts)
                        .unwrap()
                        .params;
                    pct == c.classify_parametric(p.mu, p.sigma).unwrap()
                })
                .count()
        })
        .sum();
    let total = points.len() * 100;
    outcome(
        points.len() == 50 && agree == total,
        format!(
            "{agree}/{total} trials agree at {} points, per category {per_cat:?}",
            points.len()
        ),
    )
}

fn boundary_activity() -> Outcome {
    let polys = Criteria::default().category_polygons((0.2, 3.0)).unwrap();
    let frontier = |from: Category, to: Category, needed: Criterion| -> Vec<String> {
        polys[from.index()]
            .upper
            .iter()
            .filter(|s| s.neighbor == to)
            .filter(|s| s.criterion != needed && !s.coincident.contains(&needed))
            .map(|s| {
                let mut names = vec![s.criterion.to_string()];
                names.extend(s.coincident.iter().map(|c| c.to_string()));
                format!("{} on σ∈[{:.3},{:.3}]", names.join("+"), s.start.1, s.end.1)
            })
            .collect()
    };
    let ab = frontier(Category::A, Category::B, Criterion::P95);
    let de = frontier(Category::D, Category::E, Criterion::G540);
    let ok = ab.is_empty() && de.is_empty();
    let mut detail = Vec::new();
    if !ab.is_empty() {
        detail.push(format!("A-B also set by {}", ab.join(", ")));
    }
    if !de.is_empty() {
        detail.push(format!("D-E also set by {}", de.join(", ")));
    }
    outcome(
        ok,
        if ok {
            "A-B by P95, D-E by G540".into()
        } else {
            detail.join("; ")
        },
    )
}

fn imputation_recovery() -> Outcome {
    let (mu, sigma, n) = (5.0, 1.2, 144usize);
    let bound = (mu + common::z(0.9) * sigma).exp();
    let se = (sigma * sigma / n as f64 + sigma * sigma / (2.0 * (n as f64 - 1.0))).sqrt();
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
    let trials = 1000;
    let results: Vec<(bool, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = replication_rng(1010, t as u64);
            let s = lognormal_series(&mut rng, start, mu, sigma, 0.0, 12.0, n, Some(bound));
            let frac = s.iter().filter(|x| x.reading.is_censored()).count() as f64 / n as f64;
            let p = fit_lognormal(&s, CensorPolicy::Impute, &FitOptions::default())
                .unwrap()
                .params;
            ((p.mu - mu).hypot(p.sigma - sigma) <= 3.0 * se, frac)
        })
        .collect();
    let hits = results.iter().filter(|r| r.0).count();
    let mean_frac = results.iter().map(|r| r.1).sum::<f64>() / trials as f64;
    outcome(
        hits * 100 >= 99 * trials,
        format!("{hits}/{trials} within 3 combined SE, mean censored fraction {mean_frac:.3}"),
    )
}

fn cli_determinism() -> Outcome {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/synthetic_sites.csv");
    let f = data.to_str().unwrap();
    let commands: [&[&str]; 7] = [
        &["classify", f, "--method", "both"],
        &["trend", f],
        &[
            "power",
            "--sigma",
            "1.5",
            "--years",
            "5",
            "--samples-per-year",
            "12",
        ],
        &[
            "simulate",
            "--median",
            "150",
            "--p95",
            "1750",
            "--years",
            "5",
            "--samples-per-year",
            "12",
            "--replications",
            "5000",
            "--seed",
            "11",
        ],
        &[
            "simulate",
            "--experiment",
            "trend",
            "--mu",
            "5",
            "--sigma",
            "1.5",
            "--trend",
            "-0.13",
            "--years",
            "5",
            "--samples-per-year",
            "12",
            "--replications",
            "2000",
            "--seed",
            "11",
        ],
        &[
            "correlate",
            f,
            "--min-pairs",
            "30",
            "--split-date",
            "2013-01-01",
        ],
        &["boundaries"],
    ];
    let mut failed = Vec::new();
    for args in commands {
        for format in ["csv", "json"] {
            let run = || {
                let out = Command::new(env!("CARGO_BIN_EXE_swimstat"))
                    .args(args)
                    .args(["--format", format])
                    .output()
                    .unwrap();
                (out.status.success(), out.stdout)
            };
            let (a, b) = (run(), run());
            if !(a.0 && b.0 && a.1 == b.1) {
                failed.push(format!("{} ({format})", args[0]));
            }
        }
    }
    let ok = failed.is_empty();
    outcome(
        ok,
        if ok {
            "14/14 runs byte-identical".into()
        } else {
            format!("differs: {}", failed.join(", "))
        },
    )
}

/// Percentile-to-parametric variance ratio of the P95 estimate at n = 60,
/// against the large-sample factor (c/d)² within 10%.
fn variance_ratio_at_sixty() -> Outcome {
    let z95 = common::z(0.95);
    let est: Vec<(f64, f64)> = standard_normal_reps(60, 31)
        .into_iter()
        .map(|mut xs| {
            let (m, s) = mean_sd(&xs);
            xs.sort_by(f64::total_cmp);
            (hazen_percentile(&xs, 0.95).unwrap(), m + s * z95)
        })
        .collect();
    let var = |v: Vec<f64>| mean_sd(&v).1.powi(2);
    let ratio = var(est.iter().map(|e| e.0).collect()) / var(est.iter().map(|e| e.1).collect());
    let factor = sampling_coefficients(0.95).unwrap().factor;
    let rel = ratio / factor - 1.0;
    outcome(
        rel.abs() < 0.10,
        format!("ratio {ratio:.4} vs {factor:.4} ({:+.1}%)", 100.0 * rel),
    )
}

type Check = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Check; 11] = [
        ("sampling coefficients", sampling_table),
        ("false-pass rates", false_pass_rates),
        ("trend detectability", trend_detectability),
        ("Hazen P95 bias", hazen_bias),
        ("unbiased parametric percentile", unbiased_percentile),
        ("censoring trend ordering", censoring_order),
        ("classifier oracle equivalence", classifier_oracle),
        ("large-sample classifier agreement", large_sample_agreement),
        ("boundary activity", boundary_activity),
        ("imputation recovery", imputation_recovery),
        ("CLI determinism", cli_determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        failures += usize::from(!o.pass);
        println!(
            "criterion {:>2} {:<34} {} ({:.1} s) {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
    }
    let t = Instant::now();
    let o = variance_ratio_at_sixty();
    failures += usize::from(!o.pass);
    println!(
        "invariant    {:<34} {} ({:.1} s) {}",
        "P95 variance ratio at n = 60",
        if o.pass { "PASS" } else { "FAIL" },
        t.elapsed().as_secs_f64(),
        o.detail
    );
    println!(
        "acceptance: {} of {} checks passed, {failures} failed",
        criteria.len() + 1 - failures,
        criteria.len() + 1
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
