//! Seeded synthetic branches, windowed and split like real data.
//!
//!     cargo run --example synthetic_data

use chrono::NaiveDate;
use transferlab::data::{generate_synthetic, prepare_dataset, SynthConfig};

fn main() -> transferlab::Result<()> {
    let synth = SynthConfig::six_branch(42);
    let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(2017, 12, 31).unwrap();
    let series = generate_synthetic(&synth, start, end)?;

    println!("branch  days  mean/day  closed  train  test");
    for s in &series {
        let mean = s.observations.iter().map(|o| o.revenue).sum::<f64>() / s.len() as f64;
        let ds = prepare_dataset(s, 7, 2017)?;
        println!(
            "{:<6} {:>5} {:>9.1}  {:<6} {:>5} {:>5}",
            s.branch_id,
            s.len(),
            mean,
            format!("{:?}", s.closed_weekdays),
            ds.train.len(),
            ds.test.len()
        );
    }
    Ok(())
}
