use crate::error::{Error, Result};
use crate::kv::KvFile;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Architecture and training hyperparameters of the multi-head CNN.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Length of each head's input (the sales period).
    pub input_len: usize,
    pub conv_filters: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub dense1: usize,
    pub dense2: usize,
    pub output_len: usize,
    pub base_epochs: usize,
    pub retrain_epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_len: 7,
            conv_filters: 32,
            kernel_size: 3,
            pool_size: 2,
            dense1: 200,
            dense2: 100,
            output_len: 7,
            base_epochs: 20,
            retrain_epochs: 25,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn conv1_len(&self) -> usize {
        self.input_len + 1 - self.kernel_size
    }

    pub fn conv2_len(&self) -> usize {
        self.conv1_len() + 1 - self.kernel_size
    }

    pub fn pooled_len(&self) -> usize {
        self.conv2_len() / self.pool_size
    }

    /// Width of one head after flattening.
    pub fn head_width(&self) -> usize {
        self.pooled_len() * self.conv_filters
    }

    pub fn concat_width(&self) -> usize {
        super::HEADS.len() * self.head_width()
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("input_len", self.input_len),
            ("conv_filters", self.conv_filters),
            ("kernel_size", self.kernel_size),
            ("pool_size", self.pool_size),
            ("dense1", self.dense1),
            ("dense2", self.dense2),
            ("output_len", self.output_len),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{name} must be at least 1")));
        }
        if 2 * (self.kernel_size - 1) >= self.input_len {
            return Err(Error::Config(format!(
                "kernel_size {} too large for head length {}",
                self.kernel_size, self.input_len
            )));
        }
        if self.pooled_len() == 0 {
            return Err(Error::Config(format!(
                "pool_size {} exceeds conv output length {}",
                self.pool_size,
                self.conv2_len()
            )));
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        Ok(())
    }

    /// Applies keys of a `model.` section (prefix already stripped).
    pub fn from_kv(kv: &KvFile, base: ModelConfig) -> Result<Self> {
        let cfg = ModelConfig {
            input_len: kv.get_or("input_len", base.input_len)?,
            conv_filters: kv.get_or("conv_filters", base.conv_filters)?,
            kernel_size: kv.get_or("kernel_size", base.kernel_size)?,
            pool_size: kv.get_or("pool_size", base.pool_size)?,
            dense1: kv.get_or("dense1", base.dense1)?,
            dense2: kv.get_or("dense2", base.dense2)?,
            output_len: kv.get_or("output_len", base.output_len)?,
            base_epochs: kv.get_or("base_epochs", base.base_epochs)?,
            retrain_epochs: kv.get_or("retrain_epochs", base.retrain_epochs)?,
            batch_size: kv.get_or("batch_size", base.batch_size)?,
            adam: AdamConfig {
                learning_rate: kv.get_or("adam.learning_rate", base.adam.learning_rate)?,
                beta1: kv.get_or("adam.beta1", base.adam.beta1)?,
                beta2: kv.get_or("adam.beta2", base.adam.beta2)?,
                epsilon: kv.get_or("adam.epsilon", base.adam.epsilon)?,
            },
            seed: kv.get_or("seed", base.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        kv.set("input_len", self.input_len);
        kv.set("conv_filters", self.conv_filters);
        kv.set("kernel_size", self.kernel_size);
        kv.set("pool_size", self.pool_size);
        kv.set("dense1", self.dense1);
        kv.set("dense2", self.dense2);
        kv.set("output_len", self.output_len);
        kv.set("base_epochs", self.base_epochs);
        kv.set("retrain_epochs", self.retrain_epochs);
        kv.set("batch_size", self.batch_size);
        kv.set("adam.learning_rate", self.adam.learning_rate);
        kv.set("adam.beta1", self.adam.beta1);
        kv.set("adam.beta2", self.adam.beta2);
        kv.set("adam.epsilon", self.adam.epsilon);
        kv.set("seed", self.seed);
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry() {
        let c = ModelConfig::default();
        assert_eq!((c.conv1_len(), c.conv2_len(), c.pooled_len()), (5, 3, 1));
        assert_eq!(c.concat_width(), 4 * 32);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_geometry() {
        let c = ModelConfig {
            kernel_size: 4,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
        let c = ModelConfig {
            dense1: 0,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn kv_round_trip() {
        let c = ModelConfig {
            seed: 99,
            adam: AdamConfig {
                learning_rate: 3.3e-4,
                ..AdamConfig::default()
            },
            ..ModelConfig::default()
        };
        let kv = KvFile::parse(&c.to_kv().render()).unwrap();
        assert_eq!(ModelConfig::from_kv(&kv, ModelConfig::default()).unwrap(), c);
    }
}
