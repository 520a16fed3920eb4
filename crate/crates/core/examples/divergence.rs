//! Energy distance between branches on standardized raw features.
//!
//!     cargo run --release --example divergence

use chrono::NaiveDate;
use transferlab::data::{generate_synthetic, prepare_dataset, SynthConfig};
use transferlab::divergence::{energy_distance, raw_pair, DivergenceMatrix, Representation};

fn main() -> transferlab::Result<()> {
    let series = generate_synthetic(
        &SynthConfig::four_branch(0),
        NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
        NaiveDate::from_ymd_opt(2017, 12, 31).unwrap(),
    )?;
    let datasets = series
        .iter()
        .map(|s| prepare_dataset(s, 7, 2017))
        .collect::<transferlab::Result<Vec<_>>>()?;
    let labels: Vec<String> = datasets.iter().map(|d| d.branch_id.clone()).collect();

    // B1 and B2 share a weekly profile; B3 and B4 do not.
    let m = DivergenceMatrix::compute(Representation::Raw, &labels, |i, j| {
        let (a, b) = raw_pair(&labels[i], &datasets[i].train, &labels[j], &datasets[j].train)?;
        Ok(energy_distance(&a, &b)?.value)
    })?;
    print!("{}", m.to_csv());
    Ok(())
}
