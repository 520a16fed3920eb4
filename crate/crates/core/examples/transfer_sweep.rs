//! Base models plus every transfer path up to degree 2 over three branches,
//! with a narrow network so it finishes in seconds.
//!
//!     cargo run --release --example transfer_sweep

use chrono::NaiveDate;
use transferlab::data::{generate_synthetic, prepare_dataset, SynthConfig};
use transferlab::forecaster::ModelConfig;
use transferlab::transfer::{sweep, SweepConfig, SweepHooks};

fn main() -> transferlab::Result<()> {
    let mut synth = SynthConfig::four_branch(3);
    synth.n_branches = 3;
    synth.weekly_profiles.truncate(3);
    synth.closed_days.truncate(3);
    let series = generate_synthetic(
        &synth,
        NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
        NaiveDate::from_ymd_opt(2017, 12, 31).unwrap(),
    )?;
    let datasets = series
        .iter()
        .map(|s| prepare_dataset(s, 7, 2017))
        .collect::<transferlab::Result<Vec<_>>>()?;

    let model = ModelConfig {
        conv_filters: 8,
        dense1: 32,
        dense2: 16,
        base_epochs: 10,
        retrain_epochs: 10,
        ..ModelConfig::default()
    };
    let config = SweepConfig {
        max_degree: 2,
        parallelism: 2,
        global_seed: 9,
    };
    let out = sweep(&datasets, &model, &config, &SweepHooks::default())?;

    for (label, base) in &out.bases {
        println!("base {label}: MAPE {:.2}", base.mape().unwrap_or(f64::NAN));
    }
    for r in &out.records {
        match (r.mape_transferred, r.delta_m) {
            (Some(m), Some(d)) => println!("{:<10} MAPE {m:6.2}  delta_m {d:+.4}", r.path.to_string()),
            _ => println!("{:<10} {:?}", r.path.to_string(), r.status),
        }
    }
    Ok(())
}
