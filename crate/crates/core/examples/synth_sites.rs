//! Writes a seeded synthetic monitoring file to standard output.
//!
//! `cargo run --example synth_sites > tests/data/synthetic_sites.csv`

use std::io;

use chrono::NaiveDate;
use swimstat::ingest::{write_records, SiteSeries};
use swimstat::simulate::{lognormal_series, replication_rng};
use swimstat::{Reading, Sample};

const SEED: u64 = 20_240_611;

// (site, mu, sigma, trend per year, readings per year, years)
const SITES: [(&str, f64, f64, f64, f64, f64); 8] = [
    ("S01", 4.0, 0.8, 0.0, 12.0, 10.0),
    ("S02", 4.8, 1.2, -0.05, 12.0, 10.0),
    ("S03", 5.5, 1.5, 0.03, 12.0, 10.0),
    ("S04", 6.2, 1.4, -0.13, 12.0, 5.0),
    ("S05", 5.0, 1.0, 0.0, 12.0, 4.0),
    ("S06", 7.0, 1.8, 0.08, 12.0, 10.0),
    ("S07", 3.5, 1.1, 0.0, 26.0, 3.0),
    ("S08", 5.9, 2.0, -0.02, 12.0, 8.0),
];

fn main() -> swimstat::Result<()> {
    let start = NaiveDate::from_ymd_opt(2008, 1, 15).expect("valid date");
    let series: Vec<SiteSeries> = SITES
        .iter()
        .enumerate()
        .map(|(i, &(site, mu, sigma, trend, per_year, years))| {
            let mut rng = replication_rng(SEED, i as u64);
            let n = (per_year * years) as usize;
            let samples =
                lognormal_series(&mut rng, start, mu, sigma, trend, per_year, n, Some(9700.0))
                    .into_iter()
                    .map(|s| {
                        // Laboratory style: whole counts with a detection limit of 1.
                        let reading = match s.reading {
                            Reading::Exact(v) if v < 1.0 => Reading::Below(1.0),
                            Reading::Exact(v) => Reading::Exact(v.round()),
                            r => r,
                        };
                        Sample::new(s.date, reading)
                    })
                    .collect();
            SiteSeries::new(site, samples)
        })
        .collect();
    write_records(&series, io::stdout().lock())
}
