//! Spectral-irregularity mitigation: flag items whose embeddings sit far from
//! the dominant singular subspace, then penalise their cosine similarity to
//! the users they are closest to.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::{s, Array2, ArrayView1, ArrayView2};
use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::InteractionGraph;
use crate::seeded_rng;
use crate::spectral::reconstruction_errors;
use crate::trainer::{train, train_with_hook, AuxiliaryLoss, EmbeddingModel, EpochAux, TrainConfig, TrainingLog};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub epsilon: Vec<f64>,
    pub mu: f64,
    /// Population standard deviation of `epsilon`.
    pub s: f64,
    pub gamma: f64,
    /// Ascending item indices with `ε ≥ μ + γ·s`.
    pub flagged: Vec<usize>,
}

/// Applies the `ε ≥ μ + γ·s` rule to precomputed scores.
pub fn threshold(epsilon: Vec<f64>, gamma: f64) -> Result<DetectionResult> {
    if epsilon.is_empty() {
        return Err(Error::invalid("no reconstruction errors to threshold"));
    }
    let n = epsilon.len() as f64;
    let mu = epsilon.iter().sum::<f64>() / n;
    let s = (epsilon.iter().map(|e| (e - mu).powi(2)).sum::<f64>() / n).sqrt();
    let cut = mu + gamma * s;
    let flagged = (0..epsilon.len()).filter(|&i| epsilon[i] >= cut).collect();
    Ok(DetectionResult {
        epsilon,
        mu,
        s,
        gamma,
        flagged,
    })
}

/// Rank-`k` reconstruction errors of the item rows, thresholded at `γ`.
pub fn detect_anomalies(z_items: ArrayView2<f64>, k: usize, gamma: f64) -> Result<DetectionResult> {
    threshold(reconstruction_errors(z_items, k)?, gamma)
}

impl DetectionResult {
    pub fn to_json(&self, item_ids: &[String]) -> Result<String> {
        let value = serde_json::json!({
            "mu": self.mu,
            "s": self.s,
            "gamma": self.gamma,
            "epsilon": item_ids.iter().zip(&self.epsilon).map(|(id, e)| serde_json::json!({"item_id": id, "epsilon": e})).collect::<Vec<_>>(),
            "flagged": self.flagged.iter().map(|&i| &item_ids[i]).collect::<Vec<_>>(),
        });
        Ok(serde_json::to_string_pretty(&value)?)
    }
}

fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Option<f64> {
    let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
    (na > 0.0 && nb > 0.0).then(|| a.dot(&b) / (na * nb))
}

/// For each flagged item, the `m` users with the largest cosine similarity to
/// it (ties to the lower user index). Returns (item, user) pairs.
pub fn top_users(z_items: ArrayView2<f64>, z_users: ArrayView2<f64>, flagged: &[usize], m: usize) -> Result<Vec<(usize, usize)>> {
    if m == 0 || m > z_users.nrows() {
        return Err(Error::invalid(format!("top-m must lie in 1..={}, got {m}", z_users.nrows())));
    }
    let mut pairs = Vec::with_capacity(flagged.len() * m);
    for &i in flagged {
        let zi = z_items.row(i);
        let sims: Vec<f64> = z_users.rows().into_iter().map(|u| cosine(zi, u).unwrap_or(f64::NEG_INFINITY)).collect();
        let top = crate::eval::top_k(&sims, m, |_| false);
        pairs.extend(top.items.into_iter().map(|u| (i, u)));
    }
    Ok(pairs)
}

#[derive(Clone, Debug)]
pub struct MitigationLoss {
    pub loss: f64,
    pub grad_items: Array2<f64>,
    pub grad_users: Array2<f64>,
}

/// Mean cosine over fixed (item, user) pairs, with the gradient of the
/// cosines only.
pub fn mitigation_from_pairs(z_items: ArrayView2<f64>, z_users: ArrayView2<f64>, pairs: &[(usize, usize)]) -> Result<MitigationLoss> {
    let mut grad_items = Array2::zeros(z_items.dim());
    let mut grad_users = Array2::zeros(z_users.dim());
    if pairs.is_empty() {
        return Ok(MitigationLoss {
            loss: 0.0,
            grad_items,
            grad_users,
        });
    }
    let w = 1.0 / pairs.len() as f64;
    let mut loss = 0.0;
    for &(i, u) in pairs {
        let (a, b) = (z_items.row(i), z_users.row(u));
        let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
        if na == 0.0 || nb == 0.0 {
            return Err(Error::ZeroNorm {
                node: if na == 0.0 { z_users.nrows() + i } else { u },
            });
        }
        let c = a.dot(&b) / (na * nb);
        loss += w * c;
        // ∂cos/∂a = (b/‖b‖ − cos·a/‖a‖) / ‖a‖
        grad_items.row_mut(i).scaled_add(w / (na * nb), &b);
        grad_items.row_mut(i).scaled_add(-w * c / (na * na), &a);
        grad_users.row_mut(u).scaled_add(w / (na * nb), &a);
        grad_users.row_mut(u).scaled_add(-w * c / (nb * nb), &b);
    }
    Ok(MitigationLoss { loss, grad_items, grad_users })
}

/// Selects top-`m` users for every flagged item and evaluates the mean cosine.
pub fn mitigation_loss(z_items: ArrayView2<f64>, z_users: ArrayView2<f64>, flagged: &[usize], m: usize) -> Result<MitigationLoss> {
    let pairs = top_users(z_items, z_users, flagged, m)?;
    mitigation_from_pairs(z_items, z_users, &pairs)
}

/// `λ·L_mit` on the propagated matrix with membership frozen at construction.
pub struct MitigationTerm {
    pub num_users: usize,
    pub pairs: Vec<(usize, usize)>,
    pub weight: f64,
}

impl AuxiliaryLoss for MitigationTerm {
    fn evaluate(&self, prop: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
        let nu = self.num_users;
        let m = mitigation_from_pairs(prop.slice(s![nu.., ..]), prop.slice(s![..nu, ..]), &self.pairs)?;
        let mut grad = Array2::zeros(prop.dim());
        grad.slice_mut(s![..nu, ..]).assign(&(m.grad_users * self.weight));
        grad.slice_mut(s![nu.., ..]).assign(&(m.grad_items * self.weight));
        Ok((self.weight * m.loss, grad))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefenseMode {
    #[default]
    Full,
    /// Detect after every epoch of plain training, then drop the training
    /// edges of every item ever flagged, ban them from ranking and retrain.
    WithoutSuppression,
    /// Suppress a random set of cold items instead of the detected ones.
    WithoutDetection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefenseConfig {
    /// SVD rank used for detection.
    pub rank: usize,
    pub gamma: f64,
    pub top_m: usize,
    pub lambda_mit: f64,
    pub mode: DefenseMode,
    /// Size of the random flagged set in [`DefenseMode::WithoutDetection`].
    pub random_flagged: usize,
    pub seed: u64,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self {
            rank: 32,
            gamma: 1.0,
            top_m: 50,
            lambda_mit: 0.1,
            mode: DefenseMode::Full,
            random_flagged: 500,
            seed: 0,
        }
    }
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 || self.top_m == 0 {
            return Err(Error::Config("defense rank and top_m must be >= 1".into()));
        }
        if !(self.lambda_mit >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!(
                "lambda_mit must be >= 0 and gamma finite, got {} / {}",
                self.lambda_mit, self.gamma
            )));
        }
        Ok(())
    }
}

pub struct SimOutcome {
    pub model: EmbeddingModel,
    pub log: TrainingLog,
    /// Detection after every epoch, oldest first.
    pub detections: Vec<DetectionResult>,
    /// Items removed from the catalog (suppression ablation only).
    pub banned: HashSet<usize>,
    /// Graph the final model was trained on.
    pub graph: InteractionGraph,
}

fn item_block(prop: &Array2<f64>, nu: usize) -> ArrayView2<'_, f64> {
    prop.slice(s![nu.., ..])
}

/// Training with epoch-lagged detection and suppression, or one of the two
/// ablations.
pub fn sim_train(graph: &InteractionGraph, train_config: &TrainConfig, config: &DefenseConfig) -> Result<SimOutcome> {
    config.validate()?;
    let nu = graph.num_users();
    if config.top_m > nu {
        return Err(Error::Config(format!("top_m {} exceeds {nu} users", config.top_m)));
    }
    match config.mode {
        DefenseMode::WithoutSuppression => {
            // Same per-epoch detection cadence as the full defense, but every
            // flagged item is removed outright before a final retrain.
            let mut detections = Vec::new();
            let mut banned = HashSet::new();
            train_with_hook(graph, train_config, |trainer| {
                let prop = trainer.propagated()?;
                let det = detect_anomalies(item_block(&prop, nu), config.rank, config.gamma)?;
                banned.extend(det.flagged.iter().copied());
                detections.push(det);
                Ok(None)
            })?;
            let pruned = graph.without_training_items(&banned)?;
            let (model, log) = train(&pruned, train_config)?;
            Ok(SimOutcome {
                model,
                log,
                detections,
                banned,
                graph: pruned,
            })
        }
        DefenseMode::Full | DefenseMode::WithoutDetection => {
            let random_set = if config.mode == DefenseMode::WithoutDetection {
                let pool = graph.cold_item_pool();
                let mut rng = seeded_rng(config.seed, 0xade);
                let mut set: Vec<usize> = pool.choose_multiple(&mut rng, config.random_flagged.min(pool.len())).copied().collect();
                set.sort_unstable();
                Some(set)
            } else {
                None
            };
            let mut detections = Vec::new();
            let (model, log) = train_with_hook(graph, train_config, |trainer| {
                let prop = trainer.propagated()?;
                let flagged = match &random_set {
                    Some(set) => set.clone(),
                    None => {
                        let det = detect_anomalies(item_block(&prop, nu), config.rank, config.gamma)?;
                        let f = det.flagged.clone();
                        detections.push(det);
                        f
                    }
                };
                if config.lambda_mit == 0.0 || flagged.is_empty() {
                    return Ok(None);
                }
                let pairs = top_users(item_block(&prop, nu), prop.slice(s![..nu, ..]), &flagged, config.top_m)?;
                let term: EpochAux = Some(Box::new(MitigationTerm {
                    num_users: nu,
                    pairs,
                    weight: config.lambda_mit,
                }));
                Ok(term)
            })?;
            Ok(SimOutcome {
                model,
                log,
                detections,
                banned: HashSet::new(),
                graph: graph.clone(),
            })
        }
    }
}

pub fn write_detection(result: &DetectionResult, item_ids: &[String], path: &Path) -> Result<()> {
    fs::write(path, result.to_json(item_ids)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn threshold_arithmetic() {
        let d = threshold(vec![1.0, 1.0, 1.0, 1.0, 10.0], 1.0).unwrap();
        assert!((d.mu - 2.8).abs() < 1e-12);
        assert!((d.s - 3.6).abs() < 1e-12);
        assert_eq!(d.flagged, vec![4]);
    }

    #[test]
    fn equal_errors_flag_everything() {
        let d = threshold(vec![0.5; 4], 2.0).unwrap();
        assert_eq!(d.s, 0.0);
        assert_eq!(d.flagged, vec![0, 1, 2, 3]);
    }

    #[test]
    fn huge_gamma_flags_nothing() {
        let d = threshold(vec![0.1, 0.4, 3.0, 0.2], 1e6).unwrap();
        assert!(d.flagged.is_empty());
    }

    #[test]
    fn orthogonal_item_contributes_zero() {
        let zi = array![[1.0, 0.0]];
        let zu = array![[0.0, 2.0], [0.0, -1.0]];
        let m = mitigation_loss(zi.view(), zu.view(), &[0], 2).unwrap();
        assert!(m.loss.abs() < 1e-15);
    }

    #[test]
    fn identical_top_user_gives_one() {
        let zi = array![[0.3, 0.4]];
        let zu = array![[0.3, 0.4], [-1.0, 0.0]];
        let m = mitigation_loss(zi.view(), zu.view(), &[0], 1).unwrap();
        assert!((m.loss - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_flagged_is_zero() {
        let zi = array![[0.3, 0.4]];
        let zu = array![[0.3, 0.4]];
        let m = mitigation_loss(zi.view(), zu.view(), &[], 1).unwrap();
        assert_eq!(m.loss, 0.0);
    }

    #[test]
    fn four_user_enumeration() {
        let zi = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let zu = array![[1.0, 0.1], [0.2, 1.0], [-1.0, 0.0], [0.7, 0.7]];
        let m = mitigation_loss(zi.view(), zu.view(), &[0, 1], 2).unwrap();
        let cos = |a: [f64; 2], b: [f64; 2]| (a[0] * b[0] + a[1] * b[1]) / ((a[0] * a[0] + a[1] * a[1]).sqrt() * (b[0] * b[0] + b[1] * b[1]).sqrt());
        // Item 0's top-2: users 0, 3. Item 1's top-2: users 1, 3.
        let expect = (cos([1.0, 0.0], [1.0, 0.1]) + cos([1.0, 0.0], [0.7, 0.7]) + cos([0.0, 1.0], [0.2, 1.0]) + cos([0.0, 1.0], [0.7, 0.7])) / 4.0;
        assert!((m.loss - expect).abs() < 1e-14);
    }

    #[test]
    fn config_validation() {
        assert!(DefenseConfig {
            top_m: 0,
            ..DefenseConfig::default()
        }
        .validate()
        .is_err());
        assert!(DefenseConfig {
            lambda_mit: -1.0,
            ..DefenseConfig::default()
        }
        .validate()
        .is_err());
        DefenseConfig::default().validate().unwrap();
    }
}
