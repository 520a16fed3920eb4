//! SVCCA similarity between two forecasters: per-layer activations on a
//! shared probe are SVD-truncated, compared by CCA, and averaged.

use log::debug;

use crate::data::NormalizedWindow;
use crate::error::{Error, Result};
use crate::forecaster::{ForecastModel, HEADS};
use crate::tensor::{center_columns, matmul, matmul_tn, svd, sym_eig, Matrix};

/// Post-activation outputs of every recorded layer, rows = probe inputs.
#[derive(Debug, Clone)]
pub struct ActivationCapture {
    pub layers: Vec<(String, Matrix)>,
}

impl ActivationCapture {
    pub fn get(&self, layer: &str) -> Option<&Matrix> {
        self.layers.iter().find(|(l, _)| l == layer).map(|(_, m)| m)
    }
}

/// Whether a layer enters the aggregate score. Convolution outputs before
/// pooling are reported but not averaged.
pub fn is_aggregate_layer(layer: &str) -> bool {
    !(layer.ends_with(".conv1") || layer.ends_with(".conv2"))
}

/// Runs every probe input through `model` and stacks the activations of
/// each head's conv1, conv2 and pool outputs, then concat, dense1, dense2
/// and output, in forward order.
pub fn capture_activations(model: &ForecastModel, probe: &[NormalizedWindow]) -> Result<ActivationCapture> {
    if probe.is_empty() {
        return Err(Error::Contract("SVCCA probe is empty".into()));
    }
    let traces = probe.iter().map(|w| model.trace(w)).collect::<Result<Vec<_>>>()?;
    let stack = |f: &dyn Fn(&crate::forecaster::Trace) -> &[f64]| -> Result<Matrix> {
        let rows: Vec<Vec<f64>> = traces.iter().map(|t| f(t).to_vec()).collect();
        Matrix::from_rows(&rows)
    };
    let mut layers = Vec::new();
    for (h, head) in HEADS.iter().enumerate() {
        let name = head.label();
        layers.push((format!("{name}.conv1"), stack(&|t| &t.heads[h].conv1)?));
        layers.push((format!("{name}.conv2"), stack(&|t| &t.heads[h].conv2)?));
        layers.push((format!("{name}.pool"), stack(&|t| &t.heads[h].pooled)?));
    }
    layers.push(("concat".into(), stack(&|t| &t.concat)?));
    layers.push(("dense1".into(), stack(&|t| &t.dense1)?));
    layers.push(("dense2".into(), stack(&|t| &t.dense2)?));
    layers.push(("output".into(), stack(&|t| &t.output)?));
    Ok(ActivationCapture { layers })
}

/// Centers the columns, then keeps the fewest leading singular directions
/// whose energy `Σ s_i²` reaches `threshold` of the total. Returns the
/// rows' coordinates in those directions, or `None` when the activations
/// have no variance at all.
pub fn svd_truncate(acts: &Matrix, threshold: f64) -> Result<Option<Matrix>> {
    if acts.rows() < 2 {
        return Err(Error::Contract("truncation needs at least 2 rows".into()));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Contract(format!("threshold {threshold} not in (0, 1]")));
    }
    let centered = center_columns(acts);
    // Spread at rounding level of the activations is no variance.
    if centered.max_abs() <= 1e-12 * acts.max_abs() {
        return Ok(None);
    }
    let dec = svd(&centered)?;
    let energy: Vec<f64> = dec.s.iter().map(|s| s * s).collect();
    let total: f64 = energy.iter().sum();
    let mut acc = 0.0;
    let mut k = 0;
    for e in &energy {
        acc += e;
        k += 1;
        if acc >= threshold * total {
            break;
        }
    }
    let mut out = Matrix::zeros(acts.rows(), k);
    for i in 0..acts.rows() {
        for j in 0..k {
            out[(i, j)] = dec.u[(i, j)] * dec.s[j];
        }
    }
    Ok(Some(out))
}

/// Relative ridge added to covariance diagonals before whitening.
const COV_RIDGE: f64 = 1e-10;

fn inv_sqrt_cov(x: &Matrix) -> Result<Matrix> {
    let n = x.rows() as f64;
    let mut cov = matmul_tn(x, x)?.scale(1.0 / (n - 1.0));
    let dim = cov.rows();
    let ridge = COV_RIDGE * cov.trace() / dim as f64;
    if !(ridge > 0.0) {
        return Err(Error::Undefined("CCA of a constant block".into()));
    }
    for i in 0..dim {
        cov[(i, i)] += ridge;
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            let m = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = m;
            cov[(j, i)] = m;
        }
    }
    let (vals, vecs) = sym_eig(&cov)?;
    let mut scaled = vecs.clone();
    for j in 0..dim {
        let f = 1.0 / vals[j].max(ridge).sqrt();
        for i in 0..dim {
            scaled[(i, j)] *= f;
        }
    }
    matmul(&scaled, &vecs.transpose())
}

/// Canonical correlations of two blocks with matching rows, descending,
/// clipped to `[0, 1]`; `min(cols_a, cols_b)` values.
pub fn cca(a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
    if a.rows() != b.rows() {
        return Err(Error::Shape(format!("CCA row counts {} vs {}", a.rows(), b.rows())));
    }
    let n = a.rows();
    let need = a.cols().max(b.cols()) + 1;
    if n < need {
        return Err(Error::Contract(format!(
            "CCA needs at least {need} rows for {} and {} columns, got {n}; truncate harder",
            a.cols(),
            b.cols()
        )));
    }
    let a = center_columns(a);
    let b = center_columns(b);
    let wa = inv_sqrt_cov(&a)?;
    let wb = inv_sqrt_cov(&b)?;
    let cab = matmul_tn(&a, &b)?.scale(1.0 / (n as f64 - 1.0));
    let m = matmul(&matmul(&wa, &cab)?, &wb)?;
    let k = a.cols().min(b.cols());
    let mut s = svd(&m)?.s;
    s.truncate(k);
    Ok(s.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSimilarity {
    pub layer: String,
    pub kept_a: usize,
    pub kept_b: usize,
    /// Empty when either side had no variance.
    pub correlations: Vec<f64>,
    pub aggregated: bool,
}

impl LayerSimilarity {
    pub fn mean_cc(&self) -> Option<f64> {
        (!self.correlations.is_empty()).then(|| self.correlations.iter().sum::<f64>() / self.correlations.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvccaResult {
    pub per_layer: Vec<LayerSimilarity>,
    /// Mean over aggregate layers of the mean canonical correlation.
    pub rho: f64,
}

/// SVCCA of two same-architecture models on a shared probe.
pub fn svcca_score(
    model_a: &ForecastModel,
    model_b: &ForecastModel,
    probe: &[NormalizedWindow],
    threshold: f64,
) -> Result<SvccaResult> {
    svcca_score_layers(model_a, model_b, probe, threshold, None)
}

/// [`svcca_score`] averaging the named layers instead of the default set.
pub fn svcca_score_layers(
    model_a: &ForecastModel,
    model_b: &ForecastModel,
    probe: &[NormalizedWindow],
    threshold: f64,
    layers: Option<&[String]>,
) -> Result<SvccaResult> {
    if model_a.config != model_b.config {
        let (mut ca, mut cb) = (model_a.config.clone(), model_b.config.clone());
        ca.seed = 0;
        cb.seed = 0;
        if ca != cb {
            return Err(Error::Shape("SVCCA needs models of the same architecture".into()));
        }
    }
    let acts_a = capture_activations(model_a, probe)?;
    let acts_b = capture_activations(model_b, probe)?;
    if let Some(names) = layers {
        if let Some(bad) = names.iter().find(|n| acts_a.get(n).is_none()) {
            return Err(Error::Config(format!("unknown SVCCA layer {bad:?}")));
        }
    }
    let mut per_layer = Vec::new();
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((layer, ma), (_, mb)) in acts_a.layers.iter().zip(&acts_b.layers) {
        let ta = svd_truncate(ma, threshold)?;
        let tb = svd_truncate(mb, threshold)?;
        let aggregated = match layers {
            Some(names) => names.iter().any(|n| n == layer),
            None => is_aggregate_layer(layer),
        };
        let (kept_a, kept_b, correlations) = match (ta, tb) {
            (Some(x), Some(y)) => match cca(&x, &y) {
                Ok(c) => (x.cols(), y.cols(), c),
                Err(Error::Undefined(e)) => {
                    debug!("SVCCA: layer {layer}: {e}; skipped");
                    (x.cols(), y.cols(), Vec::new())
                }
                Err(e) => return Err(e),
            },
            (x, y) => {
                debug!("SVCCA: layer {layer} has no variance on one side; skipped");
                (x.map_or(0, |m| m.cols()), y.map_or(0, |m| m.cols()), Vec::new())
            }
        };
        let entry = LayerSimilarity {
            layer: layer.clone(),
            kept_a,
            kept_b,
            correlations,
            aggregated,
        };
        if aggregated {
            if let Some(m) = entry.mean_cc() {
                sum += m;
                count += 1;
            }
        }
        per_layer.push(entry);
    }
    if count == 0 {
        return Err(Error::Undefined("no layer survives truncation on both models".into()));
    }
    Ok(SvccaResult {
        per_layer,
        rho: sum / count as f64,
    })
}

/// `source;target;layer;kept_a;kept_b;mean_cc` rows for one ordered pair,
/// closed by a `rho` row.
pub fn svcca_rows(source: &str, target: &str, r: &SvccaResult) -> String {
    let mut s = String::new();
    for l in &r.per_layer {
        let mean = l.mean_cc().map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{source};{target};{};{};{};{mean}\n", l.layer, l.kept_a, l.kept_b));
    }
    s.push_str(&format!("{source};{target};rho;;;{}\n", r.rho));
    s
}

pub const SVCCA_HEADER: &str = "source;target;layer;kept_a;kept_b;mean_cc";
