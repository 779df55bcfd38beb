use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::NormalizedAdjacency;
use crate::seeded_rng;
use crate::trainer::config::Augmentation;
use crate::trainer::model::{propagate, EmbeddingModel};

/// Two augmented views of the propagated embeddings.
#[derive(Clone, Debug)]
pub struct Views {
    pub first: Array2<f64>,
    pub second: Array2<f64>,
}

/// Keeps every edge independently with probability `1 - rate` and
/// renormalises the surviving graph.
pub fn drop_edges(adj: &NormalizedAdjacency, rate: f64, rng: &mut ChaCha8Rng) -> NormalizedAdjacency {
    let kept: Vec<(usize, usize)> = adj.pairs().into_iter().filter(|_| rate == 0.0 || rng.random::<f64>() >= rate).collect();
    NormalizedAdjacency::from_pairs(adj.num_users, adj.num_items, &kept)
}

/// Adds `magnitude · (u / ‖u‖) ⊙ sign(z)` to every row, `u ~ U(0,1)^d`.
pub fn add_sign_noise(prop: ArrayView2<f64>, magnitude: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut out = prop.to_owned();
    if magnitude == 0.0 {
        return out;
    }
    let d = prop.ncols();
    let mut noise = vec![0.0; d];
    for mut row in out.rows_mut() {
        for x in noise.iter_mut() {
            *x = rng.random::<f64>();
        }
        let norm = noise.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        Zip::from(&mut row).and(&noise[..]).for_each(|z, &u| {
            let sign = if *z > 0.0 {
                1.0
            } else if *z < 0.0 {
                -1.0
            } else {
                0.0
            };
            *z += magnitude * (u / norm) * sign;
        });
    }
    out
}

/// Builds the two contrastive views of `model` on `adj`, deterministically for `seed`.
pub fn make_views(model: &EmbeddingModel, adj: &NormalizedAdjacency, mode: Augmentation, seed: u64) -> Result<Views> {
    mode.validate()?;
    let mut rng = seeded_rng(seed, 0xa06);
    match mode {
        Augmentation::EdgeDropout { rate } => {
            let a1 = drop_edges(adj, rate, &mut rng);
            let a2 = drop_edges(adj, rate, &mut rng);
            Ok(Views {
                first: propagate(model.embeddings.view(), &a1, model.layers)?,
                second: propagate(model.embeddings.view(), &a2, model.layers)?,
            })
        }
        Augmentation::EmbeddingNoise { magnitude } => {
            let first = model.propagate(adj)?;
            let second = add_sign_noise(first.view(), magnitude, &mut rng);
            Ok(Views { first, second })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::InteractionGraph;
    use crate::trainer::config::TrainConfig;

    fn toy() -> (EmbeddingModel, NormalizedAdjacency) {
        let g = InteractionGraph::from_pairs(4, 5, &[(0, 0), (0, 1), (1, 1), (2, 2), (2, 3), (3, 4), (3, 0)]).unwrap();
        let cfg = TrainConfig {
            dim: 6,
            seed: 3,
            ..TrainConfig::default()
        };
        let adj = crate::graph::normalized_adjacency(&g).unwrap();
        (EmbeddingModel::init(4, 5, &cfg), adj)
    }

    #[test]
    fn zero_dropout_gives_identical_views() {
        let (m, adj) = toy();
        let v = make_views(&m, &adj, Augmentation::EdgeDropout { rate: 0.0 }, 1).unwrap();
        let p = m.propagate(&adj).unwrap();
        assert_eq!(v.first, p);
        assert_eq!(v.second, p);
    }

    #[test]
    fn zero_noise_gives_identical_views() {
        let (m, adj) = toy();
        let v = make_views(&m, &adj, Augmentation::EmbeddingNoise { magnitude: 0.0 }, 1).unwrap();
        assert_eq!(v.first, v.second);
    }

    #[test]
    fn full_dropout_rejected() {
        let (m, adj) = toy();
        assert!(make_views(&m, &adj, Augmentation::EdgeDropout { rate: 1.0 }, 1).is_err());
    }

    #[test]
    fn views_are_deterministic_per_seed() {
        let (m, adj) = toy();
        for mode in [Augmentation::EdgeDropout { rate: 0.3 }, Augmentation::EmbeddingNoise { magnitude: 0.2 }] {
            let a = make_views(&m, &adj, mode, 11).unwrap();
            let b = make_views(&m, &adj, mode, 11).unwrap();
            assert_eq!(a.first, b.first);
            assert_eq!(a.second, b.second);
        }
    }

    #[test]
    fn noise_keeps_signs_and_has_given_norm() {
        let (m, adj) = toy();
        let v = make_views(&m, &adj, Augmentation::EmbeddingNoise { magnitude: 0.1 }, 2).unwrap();
        for (a, b) in v.first.rows().into_iter().zip(v.second.rows()) {
            let delta = &b - &a;
            assert!((delta.dot(&delta).sqrt() - 0.1).abs() < 1e-12);
            for (x, dx) in a.iter().zip(delta.iter()) {
                assert!(x * dx >= 0.0);
            }
        }
    }
}
