use super::params::{ParamSet, Tensor};
use super::{Head, ModelConfig, HEADS};
use crate::data::NormalizedWindow;
use crate::error::{Error, Result};
use crate::rng::RngStream;

// Tensor slots per head: conv1.weight, conv1.bias, conv2.weight, conv2.bias.
const PER_HEAD: usize = 4;

/// Multi-head 1-D CNN: four heads (sales, month, weekday, year), each
/// conv→ReLU→conv→ReLU→maxpool, concatenated into two ReLU dense layers and
/// a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastModel {
    pub config: ModelConfig,
    pub params: ParamSet,
    /// Mean training loss per epoch, across every `train` call.
    pub train_log: Vec<f64>,
    /// Branches trained on, in order.
    pub provenance: Vec<String>,
}

/// Every intermediate of one forward pass. Conv activations are stored
/// filter-major (`[filter][position]`); `pooled` is position-major, which
/// is also the flatten order feeding the concat layer.
#[derive(Debug, Clone)]
pub struct HeadTrace {
    pub input: Vec<f64>,
    pub conv1: Vec<f64>,
    pub conv2: Vec<f64>,
    pub pooled: Vec<f64>,
    pub pool_argmax: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub heads: Vec<HeadTrace>,
    pub concat: Vec<f64>,
    pub dense1: Vec<f64>,
    pub dense2: Vec<f64>,
    pub output: Vec<f64>,
}

pub(crate) fn head_input(head: Head, w: &NormalizedWindow, len: usize) -> Vec<f64> {
    match head {
        Head::Sales => {
            assert_eq!(w.sales.len(), len, "sales period does not match model input length");
            w.sales.clone()
        }
        // Calendar scalars are framed as constant channels so every head
        // shares the conv/pool geometry.
        Head::Month => vec![w.month; len],
        Head::Weekday => vec![w.weekday; len],
        Head::Year => vec![w.year; len],
    }
}

fn check_finite(values: &[f64], layer: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite activation in layer {layer}")))
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

impl ForecastModel {
    /// Weights drawn from U(−√(6/fan_in), +√(6/fan_in)); biases start at 0.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let f = config.conv_filters;
        let k = config.kernel_size;
        let mut tensors = Vec::new();
        for head in HEADS {
            let h = head.label();
            tensors.push(Tensor::zeros(format!("{h}.conv1.weight"), vec![f, 1, k]));
            tensors.push(Tensor::zeros(format!("{h}.conv1.bias"), vec![f]));
            tensors.push(Tensor::zeros(format!("{h}.conv2.weight"), vec![f, f, k]));
            tensors.push(Tensor::zeros(format!("{h}.conv2.bias"), vec![f]));
        }
        tensors.push(Tensor::zeros("dense1.weight", vec![config.concat_width(), config.dense1]));
        tensors.push(Tensor::zeros("dense1.bias", vec![config.dense1]));
        tensors.push(Tensor::zeros("dense2.weight", vec![config.dense1, config.dense2]));
        tensors.push(Tensor::zeros("dense2.bias", vec![config.dense2]));
        tensors.push(Tensor::zeros("output.weight", vec![config.dense2, config.output_len]));
        tensors.push(Tensor::zeros("output.bias", vec![config.output_len]));

        for t in tensors.iter_mut().filter(|t| t.name.ends_with(".weight")) {
            let fan_in = match t.shape.as_slice() {
                [_, c, k] => c * k,
                [i, _] => *i,
                _ => unreachable!("weight tensors are 2-d or 3-d"),
            };
            let bound = (6.0 / fan_in as f64).sqrt();
            let mut rng = RngStream::labeled(config.seed, &["init", &t.name]);
            for v in &mut t.data {
                *v = rng.uniform_range(-bound, bound);
            }
        }
        Ok(ForecastModel {
            config: config.clone(),
            params: ParamSet { tensors },
            train_log: Vec::new(),
            provenance: Vec::new(),
        })
    }

    fn t(&self, i: usize) -> &[f64] {
        &self.params.tensors[i].data
    }

    fn dense_base(&self) -> usize {
        HEADS.len() * PER_HEAD
    }

    pub fn forward(&self, w: &NormalizedWindow) -> Result<Vec<f64>> {
        Ok(self.trace(w)?.output)
    }

    /// Forward pass keeping every intermediate.
    pub fn trace(&self, w: &NormalizedWindow) -> Result<Trace> {
        let c = &self.config;
        let f = c.conv_filters;
        let k = c.kernel_size;
        let (l0, l1, l2, lp) = (c.input_len, c.conv1_len(), c.conv2_len(), c.pooled_len());

        let mut heads = Vec::with_capacity(HEADS.len());
        let mut concat = Vec::with_capacity(c.concat_width());
        for (hi, head) in HEADS.iter().enumerate() {
            let base = hi * PER_HEAD;
            let (w1, b1, w2, b2) = (self.t(base), self.t(base + 1), self.t(base + 2), self.t(base + 3));
            let input = head_input(*head, w, l0);

            let mut conv1 = vec![0.0; f * l1];
            for fo in 0..f {
                let wk = &w1[fo * k..(fo + 1) * k];
                for t in 0..l1 {
                    let mut s = b1[fo];
                    for j in 0..k {
                        s += wk[j] * input[t + j];
                    }
                    conv1[fo * l1 + t] = relu(s);
                }
            }
            check_finite(&conv1, &format!("{}.conv1", head.label()))?;

            let mut conv2 = vec![0.0; f * l2];
            for fo in 0..f {
                let out = &mut conv2[fo * l2..(fo + 1) * l2];
                out.iter_mut().for_each(|v| *v = b2[fo]);
                for ci in 0..f {
                    let wk = &w2[(fo * f + ci) * k..(fo * f + ci + 1) * k];
                    let a = &conv1[ci * l1..(ci + 1) * l1];
                    for t in 0..l2 {
                        let mut s = 0.0;
                        for j in 0..k {
                            s += wk[j] * a[t + j];
                        }
                        out[t] += s;
                    }
                }
                out.iter_mut().for_each(|v| *v = relu(*v));
            }
            check_finite(&conv2, &format!("{}.conv2", head.label()))?;

            let pool = c.pool_size;
            let mut pooled = vec![0.0; lp * f];
            let mut pool_argmax = vec![0; lp * f];
            for p in 0..lp {
                for fo in 0..f {
                    let start = p * pool;
                    let mut best = start;
                    for q in start + 1..start + pool {
                        // first index wins ties
                        if conv2[fo * l2 + q] > conv2[fo * l2 + best] {
                            best = q;
                        }
                    }
                    pooled[p * f + fo] = conv2[fo * l2 + best];
                    pool_argmax[p * f + fo] = best;
                }
            }
            concat.extend_from_slice(&pooled);
            heads.push(HeadTrace {
                input,
                conv1,
                conv2,
                pooled,
                pool_argmax,
            });
        }

        let d = self.dense_base();
        let dense1 = dense_forward(&concat, self.t(d), self.t(d + 1), true);
        check_finite(&dense1, "dense1")?;
        let dense2 = dense_forward(&dense1, self.t(d + 2), self.t(d + 3), true);
        check_finite(&dense2, "dense2")?;
        let output = dense_forward(&dense2, self.t(d + 4), self.t(d + 5), false);
        check_finite(&output, "output")?;
        Ok(Trace {
            heads,
            concat,
            dense1,
            dense2,
            output,
        })
    }

    /// Mean squared error over the batch and all outputs (model space),
    /// with its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, batch: &[NormalizedWindow]) -> Result<(f64, ParamSet)> {
        if batch.is_empty() {
            return Err(Error::Contract("loss_and_grad needs a non-empty batch".into()));
        }
        let mut grads = ParamSet::zeros_like(&self.params);
        let norm = (batch.len() * self.config.output_len) as f64;
        let mut loss = 0.0;
        for w in batch {
            let tr = self.trace(w)?;
            if w.target.len() != tr.output.len() {
                return Err(Error::Shape(format!(
                    "target length {} but model outputs {}",
                    w.target.len(),
                    tr.output.len()
                )));
            }
            let dy: Vec<f64> = tr
                .output
                .iter()
                .zip(&w.target)
                .map(|(y, t)| {
                    loss += (y - t) * (y - t);
                    2.0 * (y - t) / norm
                })
                .collect();
            self.backward(&tr, &dy, &mut grads);
        }
        let loss = loss / norm;
        if !loss.is_finite() {
            return Err(Error::Numeric("non-finite loss".into()));
        }
        Ok((loss, grads))
    }

    /// MSE only.
    pub fn loss(&self, batch: &[NormalizedWindow]) -> Result<f64> {
        let norm = (batch.len() * self.config.output_len) as f64;
        let mut loss = 0.0;
        for w in batch {
            let y = self.forward(w)?;
            loss += y.iter().zip(&w.target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(loss / norm)
    }

    /// Accumulates `∂L/∂θ` for one sample given `dy = ∂L/∂output`.
    fn backward(&self, tr: &Trace, dy: &[f64], grads: &mut ParamSet) {
        let c = &self.config;
        let f = c.conv_filters;
        let k = c.kernel_size;
        let (l1, l2, lp) = (c.conv1_len(), c.conv2_len(), c.pooled_len());
        let d = self.dense_base();

        let dh2 = dense_backward(&tr.dense2, &tr.output, dy, self.t(d + 4), grads, d + 4, false);
        let dh1 = dense_backward(&tr.dense1, &tr.dense2, &dh2, self.t(d + 2), grads, d + 2, true);
        let dz = dense_backward(&tr.concat, &tr.dense1, &dh1, self.t(d), grads, d, true);

        let hw = c.head_width();
        for (hi, ht) in tr.heads.iter().enumerate() {
            let base = hi * PER_HEAD;
            let dpooled = &dz[hi * hw..(hi + 1) * hw];

            let mut da2 = vec![0.0; f * l2];
            for p in 0..lp {
                for fo in 0..f {
                    let idx = ht.pool_argmax[p * f + fo];
                    da2[fo * l2 + idx] += dpooled[p * f + fo];
                }
            }
            for (g, a) in da2.iter_mut().zip(&ht.conv2) {
                if *a <= 0.0 {
                    *g = 0.0;
                }
            }

            let w2 = self.t(base + 2);
            let mut da1 = vec![0.0; f * l1];
            {
                let (gw2, gb2) = pair_mut(grads, base + 2);
                for fo in 0..f {
                    let g = &da2[fo * l2..(fo + 1) * l2];
                    gb2[fo] += g.iter().sum::<f64>();
                    for ci in 0..f {
                        let off = (fo * f + ci) * k;
                        let a = &ht.conv1[ci * l1..(ci + 1) * l1];
                        let da = &mut da1[ci * l1..(ci + 1) * l1];
                        for t in 0..l2 {
                            let gt = g[t];
                            if gt == 0.0 {
                                continue;
                            }
                            for j in 0..k {
                                gw2[off + j] += gt * a[t + j];
                                da[t + j] += w2[off + j] * gt;
                            }
                        }
                    }
                }
            }
            for (g, a) in da1.iter_mut().zip(&ht.conv1) {
                if *a <= 0.0 {
                    *g = 0.0;
                }
            }

            let (gw1, gb1) = pair_mut(grads, base);
            for fo in 0..f {
                for t in 0..l1 {
                    let gt = da1[fo * l1 + t];
                    if gt == 0.0 {
                        continue;
                    }
                    gb1[fo] += gt;
                    for j in 0..k {
                        gw1[fo * k + j] += gt * ht.input[t + j];
                    }
                }
            }
        }
    }

    /// ReLU on/off bits and max-pool winners for one input. Two inputs (or
    /// two parameter settings) with the same pattern lie on the same smooth
    /// piece of the network function.
    pub fn activation_pattern(&self, w: &NormalizedWindow) -> Result<Vec<usize>> {
        let tr = self.trace(w)?;
        let mut pat = Vec::new();
        for h in &tr.heads {
            pat.extend(h.conv1.iter().map(|v| (*v > 0.0) as usize));
            pat.extend(h.conv2.iter().map(|v| (*v > 0.0) as usize));
            pat.extend(h.pool_argmax.iter().copied());
        }
        pat.extend(tr.dense1.iter().map(|v| (*v > 0.0) as usize));
        pat.extend(tr.dense2.iter().map(|v| (*v > 0.0) as usize));
        Ok(pat)
    }
}

fn pair_mut(grads: &mut ParamSet, weight_idx: usize) -> (&mut [f64], &mut [f64]) {
    let (a, b) = grads.tensors.split_at_mut(weight_idx + 1);
    (&mut a[weight_idx].data, &mut b[0].data)
}

fn dense_forward(x: &[f64], w: &[f64], b: &[f64], relu_out: bool) -> Vec<f64> {
    let out_dim = b.len();
    let mut y = b.to_vec();
    for (i, xi) in x.iter().enumerate() {
        if *xi == 0.0 {
            continue;
        }
        let row = &w[i * out_dim..(i + 1) * out_dim];
        for (yo, wv) in y.iter_mut().zip(row) {
            *yo += xi * wv;
        }
    }
    if relu_out {
        y.iter_mut().for_each(|v| *v = relu(*v));
    }
    y
}

/// Accumulates weight/bias gradients of a dense layer and returns the
/// gradient with respect to its input.
fn dense_backward(
    x: &[f64],
    y: &[f64],
    dy: &[f64],
    w: &[f64],
    grads: &mut ParamSet,
    weight_idx: usize,
    relu_out: bool,
) -> Vec<f64> {
    let out_dim = dy.len();
    let g: Vec<f64> = if relu_out {
        dy.iter().zip(y).map(|(d, y)| if *y > 0.0 { *d } else { 0.0 }).collect()
    } else {
        dy.to_vec()
    };
    let (gw, gb) = pair_mut(grads, weight_idx);
    for (b, gv) in gb.iter_mut().zip(&g) {
        *b += gv;
    }
    let mut dx = vec![0.0; x.len()];
    for (i, xi) in x.iter().enumerate() {
        let row = &w[i * out_dim..(i + 1) * out_dim];
        let grow = &mut gw[i * out_dim..(i + 1) * out_dim];
        let mut acc = 0.0;
        for o in 0..out_dim {
            grow[o] += xi * g[o];
            acc += row[o] * g[o];
        }
        dx[i] = acc;
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(sales: Vec<f64>, month: f64, weekday: f64, year: f64, target: Vec<f64>) -> NormalizedWindow {
        NormalizedWindow {
            sales,
            year,
            month,
            week: 0.0,
            weekday,
            target,
        }
    }

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            input_len: 4,
            conv_filters: 1,
            kernel_size: 2,
            pool_size: 2,
            dense1: 1,
            dense2: 1,
            output_len: 1,
            ..ModelConfig::default()
        }
    }

    fn set(m: &mut ForecastModel, name: &str, values: &[f64]) {
        let t = m.params.tensors.iter_mut().find(|t| t.name == name).unwrap();
        t.data.copy_from_slice(values);
    }

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig {
            seed: 5,
            ..ModelConfig::default()
        };
        let a = ForecastModel::init(&cfg).unwrap();
        let b = ForecastModel::init(&cfg).unwrap();
        assert_eq!(a, b);
        let c = ForecastModel::init(&ModelConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a.params, c.params);
        assert_eq!(a.params.by_name("dense1.weight").unwrap().shape, vec![128, 200]);
        assert_eq!(a.params.by_name("dense2.weight").unwrap().shape, vec![200, 100]);
    }

    #[test]
    fn zero_model_outputs_zero() {
        let mut m = ForecastModel::init(&ModelConfig::default()).unwrap();
        m.params.fill(0.0);
        let w = window(vec![0.3; 7], 1.0, -1.0, 0.5, vec![0.0; 7]);
        assert_eq!(m.forward(&w).unwrap(), vec![0.0; 7]);
    }

    #[test]
    fn negative_head_contributes_zeros() {
        let mut m = ForecastModel::init(&ModelConfig::default()).unwrap();
        // force the sales head's conv1 pre-activations negative for positive inputs
        let f = m.config.conv_filters;
        let k = m.config.kernel_size;
        set(&mut m, "sales.conv1.weight", &vec![-1.0; f * k]);
        set(&mut m, "sales.conv1.bias", &vec![-0.1; f]);
        set(&mut m, "sales.conv2.bias", &vec![-0.1; f]);
        let w = window(vec![1.0; 7], 0.2, 0.2, 0.2, vec![0.0; 7]);
        let tr = m.trace(&w).unwrap();
        assert!(tr.heads[0].pooled.iter().all(|v| *v == 0.0));
        assert!(tr.concat[..m.config.head_width()].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn tiny_model_matches_hand_computation() {
        let mut m = ForecastModel::init(&tiny_config()).unwrap();
        m.params.fill(0.0);
        // sales head only: conv1 w=[1,-1] b=0.5; conv2 w=[2,1] b=0
        set(&mut m, "sales.conv1.weight", &[1.0, -1.0]);
        set(&mut m, "sales.conv1.bias", &[0.5]);
        set(&mut m, "sales.conv2.weight", &[2.0, 1.0]);
        // month head passes a bias through
        set(&mut m, "month.conv1.bias", &[1.0]);
        set(&mut m, "month.conv2.weight", &[1.0, 0.0]);
        // dense: concat (4 values, one per head) → 1 → 1 → 1
        set(&mut m, "dense1.weight", &[1.0, 2.0, 0.0, 0.0]);
        set(&mut m, "dense1.bias", &[-1.0]);
        set(&mut m, "dense2.weight", &[3.0]);
        set(&mut m, "dense2.bias", &[0.0]);
        set(&mut m, "output.weight", &[0.5]);
        set(&mut m, "output.bias", &[0.25]);

        let w = window(vec![3.0, 1.0, 2.0, 2.0], 7.0, 0.0, 0.0, vec![0.0]);
        // conv1: [3-1+.5, 1-2+.5, 2-2+.5] = [2.5, -0.5→0, 0.5]
        // conv2 (len 2): [2*2.5+0, 2*0+0.5] = [5, 0.5]; pool(2) → 5
        // month: conv1 = 1 everywhere, conv2 = 1, pool → 1
        // dense1: relu(5*1 + 1*2 - 1) = 6; dense2: 18; out: 9.25
        let tr = m.trace(&w).unwrap();
        assert_eq!(tr.heads[0].conv1, vec![2.5, 0.0, 0.5]);
        assert_eq!(tr.heads[0].conv2, vec![5.0, 0.5]);
        assert_eq!(tr.concat, vec![5.0, 1.0, 0.0, 0.0]);
        assert_eq!(tr.output, vec![9.25]);
    }

    #[test]
    fn optimum_has_zero_gradient() {
        let m = ForecastModel::init(&ModelConfig {
            seed: 3,
            ..tiny_config()
        })
        .unwrap();
        let mut w = window(vec![0.1, -0.2, 0.3, 0.4], 0.5, -0.5, 1.0, vec![0.0]);
        w.target = m.forward(&w).unwrap();
        let (loss, g) = m.loss_and_grad(&[w]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn output_layer_gradient_closed_form() {
        let cfg = ModelConfig {
            seed: 11,
            dense2: 6,
            ..ModelConfig::default()
        };
        let m = ForecastModel::init(&cfg).unwrap();
        let w = window(
            vec![0.1, -0.4, 0.7, 1.2, -0.3, 0.2, 0.9],
            0.5,
            -1.0,
            0.3,
            vec![0.2, -0.1, 0.4, 0.0, 0.3, -0.6, 1.0],
        );
        let tr = m.trace(&w).unwrap();
        let (_, g) = m.loss_and_grad(std::slice::from_ref(&w)).unwrap();
        let gw = g.by_name("output.weight").unwrap();
        let n_out = cfg.output_len as f64;
        for i in 0..cfg.dense2 {
            for o in 0..cfg.output_len {
                let expect = 2.0 * (tr.output[o] - w.target[o]) * tr.dense2[i] / n_out;
                assert!((gw.data[i * cfg.output_len + o] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let m = ForecastModel::init(&tiny_config()).unwrap();
        assert!(matches!(m.loss_and_grad(&[]), Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_activation_names_layer() {
        let mut m = ForecastModel::init(&ModelConfig::default()).unwrap();
        set(&mut m, "dense1.bias", &vec![f64::INFINITY; 200]);
        let w = window(vec![0.0; 7], 0.0, 0.0, 0.0, vec![0.0; 7]);
        match m.forward(&w) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("dense1"), "{msg}"),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn maxpool_gradient_routes_to_first_argmax() {
        // conv2 output with a tie inside the pooling window
        let mut m = ForecastModel::init(&tiny_config()).unwrap();
        m.params.fill(0.0);
        set(&mut m, "sales.conv1.bias", &[1.0]);
        set(&mut m, "sales.conv2.weight", &[1.0, 1.0]);
        set(&mut m, "dense1.weight", &[1.0, 0.0, 0.0, 0.0]);
        set(&mut m, "dense2.weight", &[1.0]);
        set(&mut m, "output.weight", &[1.0]);
        let w = window(vec![0.0; 4], 0.0, 0.0, 0.0, vec![0.0]);
        let tr = m.trace(&w).unwrap();
        assert_eq!(tr.heads[0].conv2, vec![2.0, 2.0]);
        assert_eq!(tr.heads[0].pool_argmax, vec![0]);
        let (_, g) = m.loss_and_grad(std::slice::from_ref(&w)).unwrap();
        // conv1 positions 0,1 feed conv2 position 0 (the argmax); position 2 feeds only position 1
        let gw2 = &g.by_name("sales.conv2.weight").unwrap().data;
        let dy = 2.0 * tr.output[0];
        assert_eq!(gw2, &vec![dy, dy]);
        let gb1 = g.by_name("sales.conv1.bias").unwrap().data[0];
        assert_eq!(gb1, 2.0 * dy);
    }
}
