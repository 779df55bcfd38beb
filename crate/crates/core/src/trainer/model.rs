use std::fs;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::seeded_rng;
use crate::trainer::config::TrainConfig;

/// Base (layer-0) embeddings of every node, users stacked above items.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel {
    pub embeddings: Array2<f64>,
    pub num_users: usize,
    pub layers: usize,
    pub config: TrainConfig,
}

impl EmbeddingModel {
    /// Uniform initialisation in `[-1/sqrt(d), 1/sqrt(d)]`.
    pub fn init(num_users: usize, num_items: usize, config: &TrainConfig) -> Self {
        let d = config.dim;
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = seeded_rng(config.seed, 0x1417);
        let embeddings = Array2::from_shape_simple_fn((num_users + num_items, d), || rng.random_range(-bound..bound));
        Self {
            embeddings,
            num_users,
            layers: config.layers,
            config: config.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn num_items(&self) -> usize {
        self.embeddings.nrows() - self.num_users
    }

    pub fn user_block(&self) -> ArrayView2<'_, f64> {
        self.embeddings.slice(s![..self.num_users, ..])
    }

    pub fn item_block(&self) -> ArrayView2<'_, f64> {
        self.embeddings.slice(s![self.num_users.., ..])
    }

    pub fn is_finite(&self) -> bool {
        self.embeddings.iter().all(|x| x.is_finite())
    }

    /// Final (propagated) embeddings used for scoring.
    pub fn propagate(&self, adj: &NormalizedAdjacency) -> Result<Array2<f64>> {
        propagate(self.embeddings.view(), adj, self.layers)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            num_users: self.num_users,
            num_items: self.num_items(),
            dim: self.dim(),
            layers: self.layers,
            embeddings: self.embeddings.iter().copied().collect(),
            config: self.config.clone(),
            config_hash: None,
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        if c.format_version != CHECKPOINT_VERSION {
            return Err(Error::Serde(format!("unsupported checkpoint version {}", c.format_version)));
        }
        let embeddings = Array2::from_shape_vec((c.num_users + c.num_items, c.dim), c.embeddings).map_err(|e| Error::Serde(e.to_string()))?;
        Ok(Self {
            embeddings,
            num_users: c.num_users,
            layers: c.layers,
            config: c.config,
        })
    }

    pub fn save(&self, path: &Path, config_hash: Option<&str>) -> Result<()> {
        let mut c = self.to_checkpoint();
        c.config_hash = config_hash.map(str::to_string);
        fs::write(path, serde_json::to_string(&c)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON checkpoint: row-major f64 matrix plus a config echo.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub num_users: usize,
    pub num_items: usize,
    pub dim: usize,
    pub layers: usize,
    pub embeddings: Vec<f64>,
    pub config: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Layer-mean propagation `mean_{l=0..layers} Ã^l Z`.
///
/// The operator is symmetric, so the same call backpropagates a gradient
/// taken with respect to the output.
pub fn propagate(z: ArrayView2<f64>, adj: &NormalizedAdjacency, layers: usize) -> Result<Array2<f64>> {
    if z.nrows() != adj.dim() {
        return Err(Error::Dimension(format!("embedding rows {} vs adjacency dimension {}", z.nrows(), adj.dim())));
    }
    let mut current = z.as_standard_layout().into_owned();
    let mut acc = current.clone();
    let mut next = Array2::zeros(current.raw_dim());
    for _ in 0..layers {
        adj.matrix.mul_dense_into(current.view(), &mut next);
        acc += &next;
        std::mem::swap(&mut current, &mut next);
    }
    acc /= (layers + 1) as f64;
    Ok(acc)
}
