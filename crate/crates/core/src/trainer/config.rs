use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// How the two contrastive views are produced.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Augmentation {
    /// Two independently edge-dropped graphs, resampled every epoch.
    EdgeDropout { rate: f64 },
    /// Clean propagation versus propagation plus sign-consistent uniform noise.
    EmbeddingNoise { magnitude: f64 },
}

impl Default for Augmentation {
    fn default() -> Self {
        Augmentation::EmbeddingNoise { magnitude: 0.1 }
    }
}

impl Augmentation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Augmentation::EdgeDropout { rate } if !(0.0..1.0).contains(&rate) => {
                Err(Error::Config(format!("edge dropout rate must lie in [0, 1), got {rate}")))
            }
            Augmentation::EmbeddingNoise { magnitude } if !(magnitude >= 0.0) || !magnitude.is_finite() => {
                Err(Error::Config(format!("noise magnitude must be >= 0, got {magnitude}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub dim: usize,
    pub layers: usize,
    /// InfoNCE temperature.
    pub temperature: f64,
    /// Weight of the contrastive term in the joint loss.
    pub gcl_weight: f64,
    pub augmentation: Augmentation,
    pub l2: f64,
    /// At most this many in-batch nodes enter the contrastive softmax.
    pub contrast_nodes: Option<usize>,
    /// Stop after this many epochs without a validation Recall@K improvement
    /// and keep the best model.
    pub patience: Option<usize>,
    pub eval_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            learning_rate: 0.001,
            epochs: 100,
            optimizer: Optimizer::default(),
            seed: 0,
            dim: 128,
            layers: 3,
            temperature: 0.2,
            gcl_weight: 0.1,
            augmentation: Augmentation::default(),
            l2: 1e-4,
            contrast_nodes: None,
            patience: None,
            eval_k: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be a finite non-negative number");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if !(self.gcl_weight >= 0.0) || !(self.l2 >= 0.0) {
            return bad("gcl_weight and l2 must be non-negative");
        }
        if self.contrast_nodes == Some(0) {
            return bad("contrast_nodes must be positive when set");
        }
        self.augmentation.validate()
    }
}
