//! Joint BPR + InfoNCE training of LightGCN-style embeddings.

pub mod config;
pub mod loss;
pub mod model;
pub mod optim;
pub mod views;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{Augmentation, Optimizer, TrainConfig};
pub use loss::{bpr_loss, info_nce_loss, BprTriple, InfoNceOutput};
pub use model::{propagate, Checkpoint, EmbeddingModel};
pub use views::{make_views, Views};

use crate::error::{Error, Result};
use crate::eval;
use crate::graph::{normalized_adjacency, InteractionGraph, NormalizedAdjacency, Split};
use crate::seeded_rng;
use optim::OptimizerState;

/// An extra differentiable term evaluated on the propagated embeddings, e.g.
/// the mitigation loss of the defense. Implementations return the weighted
/// loss and its gradient with respect to the propagated matrix.
pub trait AuxiliaryLoss {
    fn evaluate(&self, prop: ArrayView2<f64>) -> Result<(f64, Array2<f64>)>;
}

/// Pre-step loss values of one optimizer step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub rec: f64,
    /// Contrastive loss averaged over the contrasted nodes.
    pub gcl: f64,
    pub reg: f64,
    pub aux: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub rec: f64,
    pub gcl: f64,
    pub aux: f64,
    pub total: f64,
    pub val_recall: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,L_rec,L_gcl,total,val_recall\n");
        for r in &self.epochs {
            let val = r.val_recall.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", r.epoch, r.rec, r.gcl, r.total, val);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

enum ViewState {
    None,
    Dropped(NormalizedAdjacency, NormalizedAdjacency),
}

/// Owns the model and optimizer state for one training run on one graph.
pub struct Trainer<'g> {
    graph: &'g InteractionGraph,
    adj: NormalizedAdjacency,
    pairs: Vec<(usize, usize)>,
    model: EmbeddingModel,
    config: TrainConfig,
    optimizer: OptimizerState,
    sample_rng: ChaCha8Rng,
    aug_rng: ChaCha8Rng,
    views: ViewState,
    epoch: usize,
}

impl<'g> Trainer<'g> {
    pub fn new(graph: &'g InteractionGraph, config: &TrainConfig) -> Result<Self> {
        let model = EmbeddingModel::init(graph.num_users(), graph.num_items(), config);
        Self::with_model(graph, config, model)
    }

    pub fn with_model(graph: &'g InteractionGraph, config: &TrainConfig, model: EmbeddingModel) -> Result<Self> {
        config.validate()?;
        let adj = normalized_adjacency(graph)?;
        if model.embeddings.nrows() != adj.dim() || model.dim() != config.dim {
            return Err(Error::Dimension(format!(
                "model is {}x{}, graph needs {}x{}",
                model.embeddings.nrows(),
                model.dim(),
                adj.dim(),
                config.dim
            )));
        }
        let optimizer = OptimizerState::new(config.optimizer, config.learning_rate, model.embeddings.dim());
        Ok(Self {
            graph,
            pairs: graph.train_pairs(),
            adj,
            model,
            config: config.clone(),
            optimizer,
            sample_rng: seeded_rng(config.seed, 1),
            aug_rng: seeded_rng(config.seed, 2),
            views: ViewState::None,
            epoch: 0,
        })
    }

    pub fn model(&self) -> &EmbeddingModel {
        &self.model
    }

    pub fn into_model(self) -> EmbeddingModel {
        self.model
    }

    pub fn adjacency(&self) -> &NormalizedAdjacency {
        &self.adj
    }

    pub fn graph(&self) -> &InteractionGraph {
        self.graph
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }

    pub fn propagated(&self) -> Result<Array2<f64>> {
        self.model.propagate(&self.adj)
    }

    /// One shuffled pass over the training edges, each paired with a uniformly
    /// drawn non-interacted item, cut into batches.
    pub fn sample_batches(&mut self) -> Vec<Vec<BprTriple>> {
        let num_items = self.graph.num_items();
        let mut order = self.pairs.clone();
        order.shuffle(&mut self.sample_rng);
        let mut triples = Vec::with_capacity(order.len());
        for (user, pos) in order {
            if self.graph.train_items(user).len() >= num_items {
                continue;
            }
            let neg = loop {
                let j = self.sample_rng.random_range(0..num_items);
                if !self.graph.has_train_edge(user, j) {
                    break j;
                }
            };
            triples.push(BprTriple { user, pos, neg });
        }
        triples.chunks(self.config.batch_size).map(|c| c.to_vec()).collect()
    }

    fn contrast_nodes(&mut self, batch: &[BprTriple]) -> Vec<usize> {
        let nu = self.graph.num_users();
        let mut nodes: Vec<usize> = batch.iter().flat_map(|t| [t.user, nu + t.pos]).collect();
        nodes.sort_unstable();
        nodes.dedup();
        if let Some(cap) = self.config.contrast_nodes {
            if nodes.len() > cap {
                let mut picked: Vec<usize> = nodes.choose_multiple(&mut self.aug_rng, cap).copied().collect();
                picked.sort_unstable();
                return picked;
            }
        }
        nodes
    }

    fn begin_epoch(&mut self) {
        if self.config.gcl_weight > 0.0 {
            if let Augmentation::EdgeDropout { rate } = self.config.augmentation {
                let a1 = views::drop_edges(&self.adj, rate, &mut self.aug_rng);
                let a2 = views::drop_edges(&self.adj, rate, &mut self.aug_rng);
                self.views = ViewState::Dropped(a1, a2);
            }
        }
    }

    /// One optimizer step on `L_rec + ω·L_gcl + L2 (+ aux)`; returns the
    /// pre-step losses.
    pub fn joint_step(&mut self, batch: &[BprTriple], aux: Option<&dyn AuxiliaryLoss>) -> Result<StepLosses> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let nu = self.graph.num_users();
        let layers = self.model.layers;
        let omega = self.config.gcl_weight;
        let nodes = if omega > 0.0 { self.contrast_nodes(batch) } else { Vec::new() };
        let base = &self.model.embeddings;
        let prop = propagate(base.view(), &self.adj, layers)?;
        let (rec, mut grad_prop) = bpr_loss(prop.view(), nu, batch)?;
        let mut grad_base_extra: Option<Array2<f64>> = None;

        let mut gcl = 0.0;
        if omega > 0.0 {
            let scale = omega / nodes.len() as f64;
            match (&self.views, self.config.augmentation) {
                (ViewState::Dropped(a1, a2), _) => {
                    let v1 = propagate(base.view(), a1, layers)?;
                    let v2 = propagate(base.view(), a2, layers)?;
                    let out = info_nce_loss(v1.view(), v2.view(), self.config.temperature, &nodes)?;
                    let mut g = propagate((&out.grad_first * scale).view(), a1, layers)?;
                    g += &propagate((&out.grad_second * scale).view(), a2, layers)?;
                    grad_base_extra = Some(g);
                    gcl = out.loss / nodes.len() as f64;
                }
                (ViewState::None, Augmentation::EmbeddingNoise { magnitude }) => {
                    let second = views::add_sign_noise(prop.view(), magnitude, &mut self.aug_rng);
                    let out = info_nce_loss(prop.view(), second.view(), self.config.temperature, &nodes)?;
                    grad_prop.scaled_add(scale, &out.grad_first);
                    grad_prop.scaled_add(scale, &out.grad_second);
                    gcl = out.loss / nodes.len() as f64;
                }
                (ViewState::None, Augmentation::EdgeDropout { .. }) => {
                    return Err(Error::invalid("edge-dropout views requested before an epoch began"));
                }
            }
        }

        let mut aux_loss = 0.0;
        if let Some(aux) = aux {
            let (l, g) = aux.evaluate(prop.view())?;
            aux_loss = l;
            grad_prop += &g;
        }

        let (reg, reg_grad) = loss::l2_penalty(base.view(), nu, batch, self.config.l2);
        let total = rec + omega * gcl + reg + aux_loss;
        if !total.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite loss at epoch {} (rec={rec}, gcl={gcl}, reg={reg}, aux={aux_loss}, max|z|={})",
                self.epoch,
                base.iter().fold(0.0f64, |m, x| m.max(x.abs()))
            )));
        }
        let mut grad = propagate(grad_prop.view(), &self.adj, layers)?;
        if let Some(g) = grad_base_extra {
            grad += &g;
        }
        grad += &reg_grad;
        self.optimizer.apply(&mut self.model.embeddings, &grad);
        if !self.model.is_finite() {
            return Err(Error::numerical(format!("embeddings became non-finite at epoch {}", self.epoch)));
        }
        Ok(StepLosses {
            rec,
            gcl,
            reg,
            aux: aux_loss,
            total,
        })
    }

    /// Runs one epoch and returns batch-averaged losses.
    pub fn run_epoch(&mut self, aux: Option<&dyn AuxiliaryLoss>) -> Result<StepLosses> {
        self.begin_epoch();
        let batches = self.sample_batches();
        let mut acc = StepLosses::default();
        for batch in &batches {
            let s = self.joint_step(batch, aux)?;
            acc.rec += s.rec;
            acc.gcl += s.gcl;
            acc.reg += s.reg;
            acc.aux += s.aux;
            acc.total += s.total;
        }
        let n = batches.len().max(1) as f64;
        self.epoch += 1;
        Ok(StepLosses {
            rec: acc.rec / n,
            gcl: acc.gcl / n,
            reg: acc.reg / n,
            aux: acc.aux / n,
            total: acc.total / n,
        })
    }

    pub fn validation_recall(&self) -> Result<f64> {
        let prop = self.propagated()?;
        eval::recall_at_k_split(prop.view(), self.graph, self.config.eval_k, Split::Validation, None)
    }
}

/// Trains from a fresh initialisation for `config.epochs` epochs, with
/// optional early stopping on validation Recall@K.
pub fn train(graph: &InteractionGraph, config: &TrainConfig) -> Result<(EmbeddingModel, TrainingLog)> {
    train_with_hook(graph, config, |_| Ok(None))
}

/// Boxed auxiliary term handed from one epoch to the next.
pub type EpochAux = Option<Box<dyn AuxiliaryLoss>>;

/// Like [`train`], but after every epoch `hook` sees the trainer and returns
/// the auxiliary term used throughout the following epoch (none in the first).
pub fn train_with_hook<F>(graph: &InteractionGraph, config: &TrainConfig, mut hook: F) -> Result<(EmbeddingModel, TrainingLog)>
where
    F: FnMut(&Trainer<'_>) -> Result<EpochAux>,
{
    let mut trainer = Trainer::new(graph, config)?;
    let mut log = TrainingLog::default();
    let has_validation = graph.count(Split::Validation) > 0;
    let mut best: Option<(f64, usize, EmbeddingModel)> = None;
    let mut since_best = 0;
    let mut aux: EpochAux = None;
    for epoch in 1..=config.epochs {
        let losses = trainer.run_epoch(aux.as_deref())?;
        let val_recall = match config.patience {
            Some(_) if has_validation => Some(trainer.validation_recall()?),
            _ => None,
        };
        log.epochs.push(EpochRecord {
            epoch,
            rec: losses.rec,
            gcl: losses.gcl,
            aux: losses.aux,
            total: losses.total,
            val_recall,
        });
        if let (Some(patience), Some(r)) = (config.patience, val_recall) {
            if best.as_ref().is_none_or(|(b, _, _)| r > *b) {
                best = Some((r, epoch, trainer.model().clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    log::debug!("early stop at epoch {epoch}");
                    break;
                }
            }
        }
        aux = hook(&trainer)?;
    }
    match best {
        Some((_, epoch, model)) => {
            log.best_epoch = Some(epoch);
            Ok((model, log))
        }
        None => Ok((trainer.into_model(), log)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic, SyntheticSpec};

    fn small_graph() -> InteractionGraph {
        let spec = SyntheticSpec {
            users: 20,
            items: 30,
            density: 0.2,
            seed: 4,
            ..SyntheticSpec::default()
        };
        generate_synthetic(&spec).unwrap()
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            dim: 8,
            batch_size: 16,
            learning_rate: 0.01,
            epochs: 3,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let g = small_graph();
        let c = TrainConfig { epochs: 0, ..cfg() };
        let (m, log) = train(&g, &c).unwrap();
        assert_eq!(m, EmbeddingModel::init(g.num_users(), g.num_items(), &c));
        assert!(log.epochs.is_empty());
    }

    #[test]
    fn zero_learning_rate_keeps_model() {
        let g = small_graph();
        let c = TrainConfig { learning_rate: 0.0, ..cfg() };
        let mut t = Trainer::new(&g, &c).unwrap();
        let before = t.model().clone();
        t.run_epoch(None).unwrap();
        assert_eq!(t.model(), &before);
    }

    #[test]
    fn same_seed_same_losses() {
        let g = small_graph();
        let (a, la) = train(&g, &cfg()).unwrap();
        let (b, lb) = train(&g, &cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn zero_gcl_weight_matches_bpr_only_sampling() {
        // ω = 0 must not consume augmentation randomness or touch gradients.
        let g = small_graph();
        let a = TrainConfig { gcl_weight: 0.0, ..cfg() };
        let b = TrainConfig {
            gcl_weight: 0.0,
            augmentation: Augmentation::EdgeDropout { rate: 0.2 },
            ..cfg()
        };
        let (ma, la) = train(&g, &a).unwrap();
        let (mb, lb) = train(&g, &b).unwrap();
        assert_eq!(ma.embeddings, mb.embeddings);
        assert_eq!(la, lb);
        assert!(la.epochs.iter().all(|r| r.gcl == 0.0));
    }

    #[test]
    fn dropout_training_runs() {
        let g = small_graph();
        let c = TrainConfig {
            augmentation: Augmentation::EdgeDropout { rate: 0.1 },
            ..cfg()
        };
        let (m, log) = train(&g, &c).unwrap();
        assert!(m.is_finite());
        assert!(log.epochs.iter().all(|r| r.gcl > 0.0));
    }

    #[test]
    fn early_stopping_keeps_best_epoch() {
        let g = crate::graph::split(&small_graph(), Default::default(), Default::default(), 1).unwrap();
        let c = TrainConfig {
            epochs: 30,
            patience: Some(2),
            eval_k: 5,
            ..cfg()
        };
        let (_, log) = train(&g, &c).unwrap();
        let best = log.best_epoch.unwrap();
        let best_recall = log.epochs[best - 1].val_recall.unwrap();
        assert!(log.epochs.iter().all(|r| r.val_recall.unwrap() <= best_recall));
    }

    #[test]
    fn log_csv_has_header_and_rows() {
        let g = small_graph();
        let (_, log) = train(&g, &cfg()).unwrap();
        let csv = log.to_csv();
        assert!(csv.starts_with("epoch,L_rec,L_gcl,total,val_recall\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
