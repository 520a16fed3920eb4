//! SVCCA between a base model, a retrained copy and an unrelated model.
//!
//!     cargo run --release --example svcca

use chrono::NaiveDate;
use transferlab::data::{generate_synthetic, prepare_dataset, SynthConfig};
use transferlab::forecaster::{train, ForecastModel, ModelConfig};
use transferlab::netsim::svcca_score;

fn main() -> transferlab::Result<()> {
    let series = generate_synthetic(
        &SynthConfig::four_branch(2),
        NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
        NaiveDate::from_ymd_opt(2017, 12, 31).unwrap(),
    )?;
    let a = prepare_dataset(&series[0], 7, 2017)?;
    let c = prepare_dataset(&series[2], 7, 2017)?;
    let config = ModelConfig {
        conv_filters: 8,
        dense1: 32,
        dense2: 16,
        ..ModelConfig::default()
    };

    let base_c = train(ForecastModel::init(&ModelConfig { seed: 1, ..config.clone() })?, &c, 10, 1)?;
    let base_a = train(ForecastModel::init(&ModelConfig { seed: 2, ..config.clone() })?, &a, 10, 2)?;
    let a_then_c = train(base_a.clone(), &c, 10, 3)?;

    let probe = c.normalized_test();
    for (name, other) in [("itself", &base_c), ("B1 retrained on B3", &a_then_c), ("B1 base", &base_a)] {
        let r = svcca_score(&base_c, other, &probe, 0.99)?;
        println!("B3 base vs {name:<20} rho {:.4}", r.rho);
    }
    let r = svcca_score(&base_c, &a_then_c, &probe, 0.99)?;
    for l in r.per_layer.iter().filter(|l| l.aggregated) {
        println!("  {:<14} kept {:>3}/{:<3} mean cc {:.4}", l.layer, l.kept_a, l.kept_b, l.mean_cc().unwrap_or(f64::NAN));
    }
    Ok(())
}
