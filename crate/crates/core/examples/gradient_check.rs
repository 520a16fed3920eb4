//! Backpropagation against central differences on a small network.
//!
//!     cargo run --example gradient_check

use transferlab::forecaster::{finite_difference_check, random_batch, ForecastModel, ModelConfig};

fn main() -> transferlab::Result<()> {
    let config = ModelConfig {
        conv_filters: 3,
        dense1: 12,
        dense2: 6,
        seed: 5,
        ..ModelConfig::default()
    };
    let model = ForecastModel::init(&config)?;
    let batch = random_batch(config.input_len, config.output_len, 8, 1);
    let r = finite_difference_check(&model, &batch, 300, 1e-5, 2)?;
    println!(
        "checked {} of {} parameters ({} draws on kinks skipped)",
        r.checked,
        model.params.len(),
        r.rejected
    );
    println!("max relative error {:.2e} at {}", r.max_rel_error, r.worst);
    Ok(())
}
