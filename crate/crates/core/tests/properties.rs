mod common;

use chrono::{Duration, NaiveDate};
use proptest::prelude::*;
use swimstat::cli::report::{format_number, round_sig};
use swimstat::criteria::Criterion;
use swimstat::estimation::{fit_lognormal, hazen_percentile, mean_sd, FitOptions};
use swimstat::ingest::{parse_records, pearson, write_records, SiteSeries};
use swimstat::trend::{deconvolved_variance, fit_trend, significance_tiers};
use swimstat::{CensorPolicy, Criteria, Reading, Sample};

fn day(i: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2005, 1, 1).unwrap() + Duration::days(i)
}

fn reading() -> impl Strategy<Value = Reading> {
    let value = (1u32..100_000).prop_map(|v| v as f64 / 10.0);
    prop_oneof![
        6 => value.clone().prop_map(Reading::Exact),
        1 => value.clone().prop_map(Reading::Below),
        1 => value.prop_map(Reading::Above),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn parametric_category_is_monotone_in_mu(mu in 0.0f64..10.0, dmu in 0.0f64..3.0, sigma in 0.01f64..4.0) {
        let c = Criteria::default();
        prop_assert!(c.classify_parametric(mu, sigma).unwrap() <= c.classify_parametric(mu + dmu, sigma).unwrap());
    }

    #[test]
    fn parametric_category_matches_rule_table(mu in 2.0f64..9.0, sigma in 0.2f64..3.0) {
        let got = Criteria::default().classify_parametric(mu, sigma).unwrap();
        prop_assert_eq!(got, common::table_category(mu, sigma));
    }

    #[test]
    fn single_criterion_bands_are_monotone(a in 0.0f64..3000.0, b in 0.0f64..3000.0, which in 0usize..4) {
        let c = Criteria::default();
        let crit = [Criterion::P50, Criterion::P95, Criterion::G260, Criterion::G540][which];
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (lo, hi) = if which >= 2 { (lo / 3000.0, hi / 3000.0) } else { (lo, hi) };
        prop_assert!(c.band_for_criterion(crit, lo).unwrap() <= c.band_for_criterion(crit, hi).unwrap());
    }

    #[test]
    fn hazen_percentile_is_monotone_and_bounded(mut xs in prop::collection::vec(-10.0f64..10.0, 1..80), p in 0.01f64..0.99, dp in 0.0f64..0.5) {
        xs.sort_by(f64::total_cmp);
        let q1 = hazen_percentile(&xs, p).unwrap();
        let q2 = hazen_percentile(&xs, (p + dp).min(0.99)).unwrap();
        prop_assert!(q1 <= q2 + 1e-12);
        prop_assert!(xs[0] <= q1 && q2 <= xs[xs.len() - 1]);
    }

    #[test]
    fn uncensored_fit_is_sample_moments(values in prop::collection::vec(1.0f64..1e5, 2..60)) {
        prop_assume!(values.iter().any(|v| (v - values[0]).abs() > 1e-6));
        let samples: Vec<Sample> = values.iter().enumerate().map(|(i, &v)| Sample::new(day(i as i64), Reading::Exact(v))).collect();
        let fit = fit_lognormal(&samples, CensorPolicy::Impute, &FitOptions::default()).unwrap();
        let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        let (m, s) = mean_sd(&logs);
        prop_assert_eq!(fit.iterations, 0);
        prop_assert!((fit.params.mu - m).abs() < 1e-12 && (fit.params.sigma - s).abs() < 1e-12);
    }

    #[test]
    fn imputed_values_stay_in_their_censoring_region(
        exact in prop::collection::vec(2.0f64..8.0, 8..40),
        below in prop::collection::vec(2.0f64..5.0, 0..4),
        above in prop::collection::vec(5.0f64..8.0, 0..4),
    ) {
        let mut samples: Vec<Sample> = Vec::new();
        let all = exact.iter().map(|&v| Reading::Exact(v.exp()))
            .chain(below.iter().map(|&v| Reading::Below(v.exp())))
            .chain(above.iter().map(|&v| Reading::Above(v.exp())));
        for (i, r) in all.enumerate() {
            samples.push(Sample::new(day(i as i64), r));
        }
        let fit = fit_lognormal(&samples, CensorPolicy::Impute, &FitOptions::default()).unwrap();
        for iv in &fit.imputed {
            match samples[iv.sample].reading {
                Reading::Below(b) => prop_assert!(iv.log_value < b.ln()),
                Reading::Above(b) => prop_assert!(iv.log_value > b.ln()),
                Reading::Exact(v) => prop_assert_eq!(iv.log_value, v.ln()),
            }
        }
    }

    #[test]
    fn ols_residuals_are_orthogonal(values in prop::collection::vec(1.0f64..1e4, 3..50), gaps in prop::collection::vec(1i64..60, 50)) {
        let mut t = 0;
        let samples: Vec<Sample> = values.iter().zip(&gaps).map(|(&v, &g)| { t += g; Sample::new(day(t), Reading::Exact(v)) }).collect();
        let fit = fit_trend(&samples, CensorPolicy::Impute, &FitOptions::default()).unwrap();
        let (mut sum, mut cross, mut scale) = (0.0, 0.0, 0.0);
        for s in &samples {
            let ty = swimstat::trend::years_between(fit.origin, s.date);
            let r = s.reading.value().ln() - fit.mean_at(ty);
            sum += r;
            cross += r * (ty - fit.time_mean);
            scale += s.reading.value().ln().abs() * (1.0 + ty);
        }
        prop_assert!(sum.abs() < 1e-10 * scale && cross.abs() < 1e-10 * scale);
    }

    #[test]
    fn significance_tiers_nest(slopes in prop::collection::vec(-1.0f64..1.0, 2..30), noise in 0.1f64..2.0) {
        let fits: Vec<_> = slopes.iter().enumerate().map(|(k, &m)| {
            let samples: Vec<Sample> = (0..24).map(|i| {
                let wobble = noise * (((i * 7 + k * 3) % 11) as f64 / 5.0 - 1.0);
                Sample::new(day(30 * i as i64), Reading::Exact((4.0 + m * i as f64 / 12.0 + wobble).exp()))
            }).collect();
            fit_trend(&samples, CensorPolicy::Impute, &FitOptions::default()).unwrap()
        }).collect();
        let t = significance_tiers(&fits).unwrap();
        for c in [t.improving, t.deteriorating] {
            prop_assert!(c[2] <= c[1] && c[1] <= c[0]);
        }
        prop_assert_eq!(t.improving[0] + t.deteriorating[0] + t.not_significant, t.total);
    }

    #[test]
    fn deconvolved_variance_is_never_negative(sd in 0.0f64..5.0, se in 0.0f64..5.0) {
        prop_assert!(deconvolved_variance(sd, se) >= 0.0);
    }

    #[test]
    fn series_survive_csv_round_trip(sites in prop::collection::btree_map("[A-Za-z0-9 ,_-]{1,8}", prop::collection::vec((0i64..5000, reading()), 1..30), 1..5)) {
        let series: Vec<SiteSeries> = sites.iter()
            .filter(|(name, _)| name.trim() == name.as_str() && !name.is_empty())
            .map(|(name, rs)| SiteSeries::new(name.clone(), rs.iter().map(|&(d, r)| Sample::new(day(d), r)).collect()))
            .collect();
        prop_assume!(!series.is_empty());
        let mut buf = Vec::new();
        write_records(&series, &mut buf).unwrap();
        let back = parse_records(buf.as_slice()).unwrap();
        prop_assert!(back.errors.is_empty());
        prop_assert_eq!(back.series, series);
    }

    #[test]
    fn pearson_is_symmetric(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..50)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        match (pearson(&x, &y), pearson(&y, &x)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12 && a.abs() <= 1.0),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn formatted_numbers_parse_to_rounded_value(v in prop::num::f64::NORMAL) {
        let text = format_number(v);
        let back: f64 = text.parse().unwrap();
        prop_assert_eq!(back, round_sig(v));
        prop_assert!(((back - v) / v).abs() <= 5e-6);
    }
}
