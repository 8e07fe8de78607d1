//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal};
use swimstat::Category;

pub fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

pub fn phi(x: f64) -> f64 {
    std_normal().pdf(x)
}

pub fn big_phi(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn z(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Composite Simpson rule with `2k` panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, k: usize) -> f64 {
    let n = 2 * k;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// `E[g(S)]` for `S = √(χ²_ν / ν)`.
pub fn expect_over_sd_ratio(nu: f64, g: impl Fn(f64) -> f64) -> f64 {
    let chi = ChiSquared::new(nu).unwrap();
    let hi = 1.0 + 12.0 / nu.sqrt();
    simpson(
        |s| {
            if s <= 0.0 {
                0.0
            } else {
                g(s) * chi.pdf(nu * s * s) * 2.0 * nu * s
            }
        },
        0.0,
        hi,
        20_000,
    )
}

/// Expected `k`-th order statistic (1-based) of `n` standard normals.
pub fn order_statistic_mean(n: usize, k: usize) -> f64 {
    let ln_coef = ln_factorial(n) - ln_factorial(k - 1) - ln_factorial(n - k);
    simpson(
        |x| {
            let p = big_phi(x);
            if p <= 0.0 || p >= 1.0 {
                return 0.0;
            }
            let ln = ln_coef + (k - 1) as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln();
            x * ln.exp() * phi(x)
        },
        -12.0,
        12.0,
        20_000,
    )
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// Category by the published rule table, evaluated on the exact lognormal
/// percentiles and exceedance fractions.
pub fn table_category(mu: f64, sigma: f64) -> Category {
    let p50 = mu.exp();
    let p95 = (mu + z(0.95) * sigma).exp();
    let g260 = 1.0 - big_phi((260f64.ln() - mu) / sigma);
    let g540 = 1.0 - big_phi((540f64.ln() - mu) / sigma);
    let by_g540 = if g540 < 0.05 {
        Category::A
    } else if g540 <= 0.10 {
        Category::B
    } else if g540 <= 0.20 {
        Category::C
    } else if g540 <= 0.30 {
        Category::D
    } else {
        Category::E
    };
    let by_p50 = if p50 <= 130.0 {
        Category::A
    } else if p50 <= 260.0 {
        Category::D
    } else {
        Category::E
    };
    let by_p95 = if p95 <= 540.0 {
        Category::A
    } else if p95 <= 1000.0 {
        Category::B
    } else if p95 <= 1200.0 {
        Category::C
    } else {
        Category::D
    };
    let by_g260 = if g260 < 0.20 {
        Category::A
    } else if g260 <= 0.34 {
        Category::B
    } else if g260 <= 0.50 {
        Category::D
    } else {
        Category::E
    };
    by_g540.max(by_p50).max(by_p95).max(by_g260)
}

/// Mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}
