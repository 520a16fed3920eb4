use super::params::ParamSet;
use super::AdamConfig;

/// First and second moment estimates, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: ParamSet,
    v: ParamSet,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        AdamState {
            m: ParamSet::zeros_like(params),
            v: ParamSet::zeros_like(params),
        }
    }

    /// One bias-corrected Adam update; `step_index` counts from 1.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet, step_index: usize, cfg: &AdamConfig) {
        assert!(step_index >= 1, "adam step index counts from 1");
        let t = step_index as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
                v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = m.data[i] / bc1;
                let v_hat = v.data[i] / bc2;
                p.data[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::params::Tensor;
    use super::*;

    fn scalar(v: f64) -> ParamSet {
        ParamSet {
            tensors: vec![Tensor {
                name: "theta".into(),
                shape: vec![1],
                data: vec![v],
            }],
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = scalar(0.7);
        let mut st = AdamState::new(&p);
        st.step(&mut p, &scalar(0.0), 1, &AdamConfig::default());
        assert_eq!(p, scalar(0.7));
    }

    #[test]
    fn single_step_by_hand() {
        let cfg = AdamConfig::default();
        let mut p = scalar(0.0);
        let mut st = AdamState::new(&p);
        st.step(&mut p, &scalar(1.0), 1, &cfg);
        // m̂ = 1, v̂ = 1 → θ = −α / (1 + ε)
        let expect = -1e-3 / (1.0 + 1e-8);
        assert!((p.get(0) - expect).abs() < 1e-18);
        assert!((p.get(0) + 9.99999e-4).abs() < 1e-8);
    }

    #[test]
    fn deterministic() {
        let cfg = AdamConfig::default();
        let run = || {
            let mut p = scalar(0.3);
            let mut st = AdamState::new(&p);
            for t in 1..=5 {
                st.step(&mut p, &scalar(0.1 * t as f64), t, &cfg);
            }
            p
        };
        assert_eq!(run(), run());
    }
}
