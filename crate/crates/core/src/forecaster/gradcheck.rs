use super::ForecastModel;
use crate::data::NormalizedWindow;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter with the largest error, as `name[flat index]`.
    pub worst: String,
    pub checked: usize,
    /// Draws rejected because `θ ± h` crossed a ReLU or pooling boundary.
    pub rejected: usize,
}

/// Gradients smaller than this in both estimates count as agreeing zeros.
const ABS_FLOOR: f64 = 1e-9;

/// Compares `loss_and_grad` with `(L(θ+h) − L(θ−h)) / 2h` on `samples`
/// randomly drawn parameters. A draw whose perturbation changes the
/// activation pattern of any batch input sits on a kink and is redrawn.
pub fn finite_difference_check(
    model: &ForecastModel,
    batch: &[NormalizedWindow],
    samples: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheck> {
    let (_, grads) = model.loss_and_grad(batch)?;
    let base_pattern = patterns(model, batch)?;
    let mut rng = RngStream::labeled(seed, &["gradcheck"]);
    let n = model.params.len();
    let mut probe = model.clone();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
        rejected: 0,
    };
    let max_draws = samples * 50;
    let mut draws = 0;
    while out.checked < samples {
        draws += 1;
        if draws > max_draws {
            return Err(Error::Numeric(format!(
                "gradient check: only {} of {samples} parameters lie off activation kinks",
                out.checked
            )));
        }
        let i = (rng.next_u64() % n as u64) as usize;
        let theta = model.params.get(i);

        probe.params.set(i, theta + step);
        let smooth_plus = patterns(&probe, batch)? == base_pattern;
        let lp = probe.loss(batch)?;
        probe.params.set(i, theta - step);
        let smooth_minus = patterns(&probe, batch)? == base_pattern;
        let lm = probe.loss(batch)?;
        probe.params.set(i, theta);
        if !(smooth_plus && smooth_minus) {
            out.rejected += 1;
            continue;
        }

        let numeric = (lp - lm) / (2.0 * step);
        let analytic = grads.get(i);
        let scale = analytic.abs().max(numeric.abs());
        let err = if scale < ABS_FLOOR {
            0.0
        } else {
            (analytic - numeric).abs() / scale
        };
        if err > out.max_rel_error || out.worst.is_empty() {
            out.max_rel_error = out.max_rel_error.max(err);
            let name = model.params.name_of(i).to_string();
            out.worst = format!("{name}[{i}]");
        }
        out.checked += 1;
    }
    Ok(out)
}

fn patterns(model: &ForecastModel, batch: &[NormalizedWindow]) -> Result<Vec<Vec<usize>>> {
    batch.iter().map(|w| model.activation_pattern(w)).collect()
}

/// A random model-space batch for gradient checks. Inputs are drawn from
/// N(0, 1), so no pre-activation lands exactly on a ReLU kink.
pub fn random_batch(input_len: usize, output_len: usize, size: usize, seed: u64) -> Vec<NormalizedWindow> {
    let mut rng = RngStream::labeled(seed, &["gradcheck", "batch"]);
    (0..size)
        .map(|_| NormalizedWindow {
            sales: (0..input_len).map(|_| rng.normal(0.0, 1.0)).collect(),
            year: rng.normal(0.0, 1.0),
            month: rng.normal(0.0, 1.0),
            week: rng.normal(0.0, 1.0),
            weekday: rng.normal(0.0, 1.0),
            target: (0..output_len).map(|_| rng.normal(0.0, 1.0)).collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecaster::ModelConfig;

    #[test]
    fn small_configs_pass() {
        for (seed, (f, k, p, d1, d2)) in [(3, 2, 2, 8, 5), (2, 3, 2, 6, 4), (4, 3, 1, 10, 6)].into_iter().enumerate() {
            let cfg = ModelConfig {
                conv_filters: f,
                kernel_size: k,
                pool_size: p,
                dense1: d1,
                dense2: d2,
                seed: seed as u64,
                ..ModelConfig::default()
            };
            let model = ForecastModel::init(&cfg).unwrap();
            let batch = random_batch(7, 7, 4, seed as u64 + 100);
            let res = finite_difference_check(&model, &batch, 200, 1e-5, seed as u64).unwrap();
            assert_eq!(res.checked, 200);
            assert!(res.max_rel_error < 1e-4, "{res:?}");
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let cfg = ModelConfig {
            conv_filters: 2,
            dense1: 4,
            dense2: 3,
            seed: 1,
            ..ModelConfig::default()
        };
        let model = ForecastModel::init(&cfg).unwrap();
        let batch = random_batch(7, 7, 2, 5);
        // Doubling every target changes the loss surface; a gradient from
        // the original targets must disagree with differences of the new one.
        let (_, grads) = model.loss_and_grad(&batch).unwrap();
        let shifted: Vec<_> = batch
            .iter()
            .map(|w| NormalizedWindow {
                target: w.target.iter().map(|t| t * 2.0 + 1.0).collect(),
                ..w.clone()
            })
            .collect();
        let (_, g2) = model.loss_and_grad(&shifted).unwrap();
        assert_ne!(grads, g2);
        let i = model.params.len() - 1;
        let h = 1e-5;
        let mut p = model.clone();
        p.params.set(i, model.params.get(i) + h);
        let lp = p.loss(&shifted).unwrap();
        p.params.set(i, model.params.get(i) - h);
        let lm = p.loss(&shifted).unwrap();
        let numeric = (lp - lm) / (2.0 * h);
        assert!((numeric - g2.get(i)).abs() < 1e-6);
        assert!((numeric - grads.get(i)).abs() > 1e-3);
    }
}
