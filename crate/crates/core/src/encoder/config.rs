use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which encoder outputs form the relation representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReprMode {
    /// Final state of the classification token.
    Cls,
    /// Final states of the head and tail marker tokens, concatenated.
    MarkerConcat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub model_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub repr_mode: ReprMode,
    /// Candidate interpolation layers, 1-based.
    pub mixup_layers: Vec<usize>,
    /// Relation classes, no-relation included.
    pub num_classes: usize,
    /// Width of the classifier's hidden layer.
    pub classifier_hidden: usize,
    pub layer_norm_eps: f64,
    pub init_seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            num_layers: 4,
            model_dim: 64,
            num_heads: 4,
            ffn_dim: 128,
            vocab_size: 0,
            max_seq_len: 256,
            repr_mode: ReprMode::Cls,
            mixup_layers: vec![2, 3, 4],
            num_classes: 2,
            classifier_hidden: 64,
            layer_norm_eps: 1e-12,
            init_seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }

    /// Width of the relation representation fed to the classifier.
    pub fn repr_dim(&self) -> usize {
        match self.repr_mode {
            ReprMode::Cls => self.model_dim,
            ReprMode::MarkerConcat => 2 * self.model_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_layers == 0 {
            return fail("num_layers must be at least 1".into());
        }
        if self.model_dim == 0 || self.num_heads == 0 || self.model_dim % self.num_heads != 0 {
            return fail(format!(
                "model_dim {} must be a positive multiple of num_heads {}",
                self.model_dim, self.num_heads
            ));
        }
        if self.ffn_dim == 0 || self.classifier_hidden == 0 {
            return fail("ffn_dim and classifier_hidden must be positive".into());
        }
        if self.vocab_size < 2 {
            return fail(format!("vocab_size {} too small", self.vocab_size));
        }
        if self.max_seq_len == 0 {
            return fail("max_seq_len must be positive".into());
        }
        if self.num_classes < 2 {
            return fail(format!("num_classes {} must be at least 2", self.num_classes));
        }
        if let Some(&m) = self
            .mixup_layers
            .iter()
            .find(|&&m| m == 0 || m > self.num_layers)
        {
            return fail(format!(
                "mixup layer {m} outside [1, {}]",
                self.num_layers
            ));
        }
        if !(self.layer_norm_eps > 0.0) {
            return fail("layer_norm_eps must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_desk_scale_model() {
        let c = EncoderConfig {
            vocab_size: 100,
            ..Default::default()
        };
        c.validate().unwrap();
        assert_eq!((c.num_layers, c.model_dim, c.num_heads, c.ffn_dim), (4, 64, 4, 128));
        assert_eq!(c.mixup_layers, [2, 3, 4]);
        assert_eq!(c.max_seq_len, 256);
    }

    #[test]
    fn rejects_bad_head_split_and_layer_sets() {
        let base = EncoderConfig {
            vocab_size: 10,
            ..Default::default()
        };
        assert!(EncoderConfig { num_heads: 3, ..base.clone() }.validate().is_err());
        assert!(EncoderConfig { mixup_layers: vec![0], ..base.clone() }.validate().is_err());
        assert!(EncoderConfig { mixup_layers: vec![5], ..base }.validate().is_err());
    }
}
