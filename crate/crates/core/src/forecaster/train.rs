use super::adam::AdamState;
use super::ForecastModel;
use crate::data::{Dataset, SampleWindow, Scaler};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Forecast accuracy in original currency units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    /// Percent.
    pub mape: f64,
    pub rmse: f64,
    pub n_predictions: usize,
}

/// Runs `epochs` passes of mini-batch Adam over the train split, shuffled by
/// a stream derived from `shuffle_seed`. A fresh optimizer state is used
/// for every call. The dataset's branch is appended to the provenance.
pub fn train(mut model: ForecastModel, dataset: &Dataset, epochs: usize, shuffle_seed: u64) -> Result<ForecastModel> {
    if dataset.train.is_empty() {
        return Err(Error::Contract(format!("{}: empty train split", dataset.branch_id)));
    }
    let samples = dataset.normalized_train();
    let batch_size = model.config.batch_size;
    let adam_cfg = model.config.adam;
    let mut adam = AdamState::new(&model.params);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = RngStream::labeled(shuffle_seed, &["shuffle", &dataset.branch_id]);
    let mut step = 0usize;

    for epoch in 0..epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(batch_size).enumerate() {
            let batch: Vec<_> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let (loss, grads) = model.loss_and_grad(&batch).map_err(|e| {
                Error::Numeric(format!(
                    "{} epoch {epoch} batch {b}: {e}",
                    dataset.branch_id
                ))
            })?;
            step += 1;
            adam.step(&mut model.params, &grads, step, &adam_cfg);
            epoch_loss += loss * chunk.len() as f64;
        }
        if !model.params.is_finite() {
            return Err(Error::Numeric(format!(
                "{} epoch {epoch}: parameters diverged",
                dataset.branch_id
            )));
        }
        model.train_log.push(epoch_loss / samples.len() as f64);
    }
    model.provenance.push(dataset.branch_id.clone());
    Ok(model)
}

/// MAPE and RMSE of the model's forecasts over the test windows, after
/// mapping forecasts back to currency units. Target days on which the
/// branch is closed are left out of both metrics.
pub fn evaluate(model: &ForecastModel, test_windows: &[SampleWindow], scaler: &Scaler) -> Result<EvalResult> {
    if test_windows.is_empty() {
        return Err(Error::Contract("evaluate needs test windows".into()));
    }
    let mut actual = Vec::new();
    let mut forecast = Vec::new();
    for w in test_windows {
        let pred = scaler.inverse_sales(&model.forward(&scaler.normalize(w))?);
        for (i, (a, f)) in w.target.iter().zip(&pred).enumerate() {
            if w.target_closed[i] {
                continue;
            }
            if *a == 0.0 {
                return Err(Error::Undefined(format!(
                    "MAPE undefined: zero actual revenue on {}",
                    w.target_date(i)
                )));
            }
            actual.push(*a);
            forecast.push(*f);
        }
    }
    Ok(EvalResult {
        mape: mape(&actual, &forecast)?,
        rmse: rmse(&actual, &forecast),
        n_predictions: actual.len(),
    })
}

/// `100/n · Σ |A − F| / |A|`.
pub fn mape(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    assert_eq!(actual.len(), forecast.len());
    if actual.is_empty() {
        return Err(Error::Undefined("MAPE of no predictions".into()));
    }
    if let Some(i) = actual.iter().position(|a| *a == 0.0) {
        return Err(Error::Undefined(format!("MAPE undefined: actual[{i}] is zero")));
    }
    let s: f64 = actual.iter().zip(forecast).map(|(a, f)| ((a - f) / a).abs()).sum();
    Ok(100.0 * s / actual.len() as f64)
}

/// `√(Σ (F − A)² / n)`.
pub fn rmse(actual: &[f64], forecast: &[f64]) -> f64 {
    assert_eq!(actual.len(), forecast.len());
    let s: f64 = actual.iter().zip(forecast).map(|(a, f)| (f - a) * (f - a)).sum();
    (s / actual.len() as f64).sqrt()
}
