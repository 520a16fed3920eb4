//! Trains one branch's forecaster and scores it on the test year.
//!
//!     cargo run --release --example train_forecaster

use chrono::NaiveDate;
use transferlab::data::{generate_synthetic, prepare_dataset, SynthConfig};
use transferlab::forecaster::{evaluate, train, ForecastModel, ModelConfig};

fn main() -> transferlab::Result<()> {
    let series = generate_synthetic(
        &SynthConfig::four_branch(1),
        NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
        NaiveDate::from_ymd_opt(2017, 12, 31).unwrap(),
    )?;
    let ds = prepare_dataset(&series[0], 7, 2017)?;

    let config = ModelConfig {
        seed: 7,
        ..ModelConfig::default()
    };
    let model = ForecastModel::init(&config)?;
    println!("{} parameters", model.params.len());

    for epochs in [1, 5, 20] {
        let trained = train(model.clone(), &ds, epochs, 3)?;
        let eval = evaluate(&trained, &ds.test, &ds.scaler)?;
        let last = trained.train_log.last().copied().unwrap_or(f64::NAN);
        println!(
            "{epochs:>2} epochs: train loss {last:.4}, test MAPE {:.2}%, RMSE {:.1} over {} days",
            eval.mape, eval.rmse, eval.n_predictions
        );
    }
    Ok(())
}
