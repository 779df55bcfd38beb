//! Independent oracles and instance generators shared by the integration
//! tests and the acceptance runner.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use specshield::graph::{Interaction, InteractionGraph, Split, TargetSet};
use specshield::spectral::{svd, Rank};
use specshield::trainer::info_nce_loss;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn fd_gradient(f: impl Fn(&Array2<f64>) -> f64, x: &Array2<f64>, h: f64) -> Array2<f64> {
    let mut g = Array2::zeros(x.dim());
    let mut probe = x.clone();
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = probe[[r, c]];
        probe[[r, c]] = orig + h;
        let up = f(&probe);
        probe[[r, c]] = orig - h;
        let down = f(&probe);
        probe[[r, c]] = orig;
        g[[r, c]] = (up - down) / (2.0 * h);
    }
    g
}

/// `‖a − b‖_F / max(‖a‖_F, ‖b‖_F)`, zero when both vanish.
pub fn rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let norm = |m: &Array2<f64>| m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        return 0.0;
    }
    norm(&(a - b)) / scale
}

/// Singular values as square roots of the Gram-matrix eigenvalues, descending.
pub fn gram_singular_values(z: ArrayView2<f64>) -> Vec<f64> {
    let (r, c) = z.dim();
    let m = DMatrix::from_fn(r, c, |i, j| z[[i, j]]);
    let gram = if r >= c { m.transpose() * &m } else { &m * m.transpose() };
    let mut ev: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Residual norms after projecting each row on the top-`k` eigenvectors of `ZᵀZ`.
pub fn gram_reconstruction_errors(z: ArrayView2<f64>, k: usize) -> Vec<f64> {
    let (r, c) = z.dim();
    let m = DMatrix::from_fn(r, c, |i, j| z[[i, j]]);
    let eig = SymmetricEigen::new(m.transpose() * &m);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    (0..r)
        .map(|i| {
            let row = m.row(i).transpose();
            let mut resid = row.clone();
            for &j in &order[..k] {
                let v = eig.eigenvectors.column(j);
                resid -= v * v.dot(&row);
            }
            resid.norm()
        })
        .collect()
}

/// Graph with `users × items` and random train/test edges, every user
/// holding at least one training edge.
pub fn random_split_graph(rng: &mut ChaCha8Rng, users: usize, items: usize) -> InteractionGraph {
    let mut edges = Vec::new();
    for u in 0..users {
        let mut pool: Vec<usize> = (0..items).collect();
        pool.shuffle(rng);
        let n_train = rng.random_range(1..=items / 3);
        let n_test = rng.random_range(0..=items / 4);
        for &i in &pool[..n_train] {
            edges.push(Interaction {
                user: u,
                item: i,
                split: Split::Train,
            });
        }
        for &i in &pool[n_train..n_train + n_test] {
            edges.push(Interaction {
                user: u,
                item: i,
                split: Split::Test,
            });
        }
    }
    InteractionGraph::new(users, items, edges, vec![], vec![]).unwrap()
}

/// Small-integer embeddings so that score ties are common.
pub fn tied_embeddings(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, dim), || rng.random_range(-2..=2) as f64)
}

/// Item `i` is in user `u`'s top-K iff fewer than K rankable items beat it,
/// where `j` beats `i` on a higher score or an equal score and lower index.
pub fn brute_in_top_k(scores: &[f64], excluded: &[bool], k: usize, i: usize) -> bool {
    if excluded[i] {
        return false;
    }
    let better = (0..scores.len())
        .filter(|&j| !excluded[j] && (scores[j] > scores[i] || (scores[j] == scores[i] && j < i)))
        .count();
    better < k
}

/// Brute-force Recall@K (test split) and HitRatio@K as the mean of the
/// per-target hit rates.
pub fn brute_force_metrics(prop: ArrayView2<f64>, graph: &InteractionGraph, targets: &TargetSet, k: usize) -> (Option<f64>, f64) {
    let nu = graph.num_users();
    let ni = graph.num_items();
    let users = prop.slice(s![..nu, ..]);
    let items = prop.slice(s![nu.., ..]);
    let (mut total, mut counted) = (0.0, 0usize);
    let mut hits = vec![0usize; targets.len()];
    for u in 0..graph.num_real_users() {
        let scores: Vec<f64> = (0..ni).map(|i| users.row(u).dot(&items.row(i))).collect();
        let excluded: Vec<bool> = (0..ni).map(|i| graph.has_train_edge(u, i)).collect();
        let held = graph.items_of(u, Split::Test);
        if !held.is_empty() {
            let found = held.iter().filter(|&&i| brute_in_top_k(&scores, &excluded, k, i)).count();
            total += found as f64 / held.len() as f64;
            counted += 1;
        }
        for (h, &t) in hits.iter_mut().zip(&targets.items) {
            *h += brute_in_top_k(&scores, &excluded, k, t) as usize;
        }
    }
    let recall = (counted > 0).then(|| total / counted as f64);
    let n = graph.num_real_users() as f64;
    let hr = hits.iter().map(|&h| h as f64 / n).sum::<f64>() / targets.len() as f64;
    (recall, hr)
}

/// Items near a `k`-dimensional subspace of `R^d`, with `planted` rows given
/// a large orthogonal component. Returns the matrix and planted indices.
pub fn planted_anomalies(rng: &mut ChaCha8Rng, items: usize, d: usize, k: usize, planted: usize) -> (Array2<f64>, Vec<usize>) {
    let basis = svd(gaussian(rng, d, d).view(), Rank::Full).unwrap().left;
    let coords = gaussian(rng, items, k) * 3.0;
    let mut z = coords.dot(&basis.slice(s![.., ..k]).t());
    z += &(gaussian(rng, items, d) * 0.05);
    let mut idx: Vec<usize> = (0..items).collect();
    idx.shuffle(rng);
    let mut chosen = idx[..planted].to_vec();
    chosen.sort_unstable();
    let off = basis.slice(s![.., k..]);
    for &i in &chosen {
        let w: Array1<f64> = (0..d - k).map(|_| StandardNormal.sample(rng)).collect();
        let w = &w / w.dot(&w).sqrt() * 3.0;
        z.row_mut(i).scaled_add(1.0, &off.dot(&w));
    }
    (z, chosen)
}

/// One shared-singular-vector trial: views `L·diag(σ′)·Rᵀ` and
/// `L·diag(σ″)·Rᵀ` with nearby spectra. Returns (measured L_gcl at τ = 1
/// with every node as a negative, σ′, σ″, N).
pub fn shared_spectrum_trial(rng: &mut ChaCha8Rng) -> (f64, Vec<f64>, Vec<f64>, usize) {
    let d = rng.random_range(2..=16);
    let n = rng.random_range(d.max(4)..=64);
    let base = svd(gaussian(rng, n, d).view(), Rank::Full).unwrap();
    let sigma: Vec<f64> = base.singular_values.to_vec();
    let jitter = |rng: &mut ChaCha8Rng| -> Vec<f64> { sigma.iter().map(|s| s * rng.random_range(0.8..1.2)).collect() };
    let (s1, s2) = (jitter(rng), jitter(rng));
    let build = |s: &[f64]| base.left.dot(&Array2::from_diag(&Array1::from(s.to_vec()))).dot(&base.right.t());
    let (z1, z2) = (build(&s1), build(&s2));
    let nodes: Vec<usize> = (0..n).collect();
    let loss = info_nce_loss(z1.view(), z2.view(), 1.0, &nodes).unwrap().loss;
    (loss, s1, s2, n)
}

/// Gradient-check instances (≤ 8 × 4). Each returns the relative error
/// between the analytic gradient and central differences.
pub mod grad {
    use ndarray::{s, Array2};
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    use specshield::attack::{attack_objective, rank_promotion_loss};
    use specshield::defense::mitigation_from_pairs;
    use specshield::graph::NormalizedAdjacency;
    use specshield::spectral::{dispersion_with_probe, DispersionNorm};
    use specshield::trainer::{bpr_loss, info_nce_loss, propagate, BprTriple};

    use super::{fd_gradient, gaussian, rel_err, rng};

    const H: f64 = 1e-6;

    fn triples(rng: &mut ChaCha8Rng, nu: usize, ni: usize, n: usize) -> Vec<BprTriple> {
        (0..n)
            .map(|_| BprTriple {
                user: rng.random_range(0..nu),
                pos: rng.random_range(0..ni),
                neg: rng.random_range(0..ni),
            })
            .collect()
    }

    pub fn bpr(seed: u64) -> f64 {
        let mut r = rng(seed);
        let (nu, ni) = (3, 5);
        let z = gaussian(&mut r, nu + ni, 4);
        let t = triples(&mut r, nu, ni, 6);
        let (_, g) = bpr_loss(z.view(), nu, &t).unwrap();
        rel_err(&g, &fd_gradient(|x| bpr_loss(x.view(), nu, &t).unwrap().0, &z, H))
    }

    /// Worst of the two view gradients.
    pub fn info_nce(seed: u64) -> f64 {
        let mut r = rng(100 + seed);
        let (a, b) = (gaussian(&mut r, 8, 4), gaussian(&mut r, 8, 4));
        let nodes = vec![0, 2, 3, 5, 7];
        let tau = r.random_range(0.2..1.0);
        let out = info_nce_loss(a.view(), b.view(), tau, &nodes).unwrap();
        let fa = fd_gradient(|x| info_nce_loss(x.view(), b.view(), tau, &nodes).unwrap().loss, &a, H);
        let fb = fd_gradient(|x| info_nce_loss(a.view(), x.view(), tau, &nodes).unwrap().loss, &b, H);
        rel_err(&out.grad_first, &fa).max(rel_err(&out.grad_second, &fb))
    }

    /// `L_rec + ω·L_gcl` with the second view a fixed shift of the first.
    pub fn joint(seed: u64) -> f64 {
        let mut r = rng(200 + seed);
        let (nu, ni) = (3, 5);
        let z = gaussian(&mut r, nu + ni, 4);
        let shift = gaussian(&mut r, nu + ni, 4) * 0.1;
        let t = triples(&mut r, nu, ni, 5);
        let nodes: Vec<usize> = (0..nu + ni).collect();
        let omega = 0.3;
        let f = |x: &Array2<f64>| {
            let second = x + &shift;
            bpr_loss(x.view(), nu, &t).unwrap().0 + omega * info_nce_loss(x.view(), second.view(), 0.2, &nodes).unwrap().loss
        };
        let second = &z + &shift;
        let nce = info_nce_loss(z.view(), second.view(), 0.2, &nodes).unwrap();
        let g = bpr_loss(z.view(), nu, &t).unwrap().1 + (nce.grad_first + nce.grad_second) * omega;
        rel_err(&g, &fd_gradient(f, &z, H))
    }

    /// BPR on propagated embeddings, differentiated with respect to the base rows.
    pub fn through_propagation(seed: u64) -> f64 {
        let mut r = rng(300 + seed);
        let (nu, ni) = (3, 5);
        let mut pairs: Vec<(usize, usize)> = (0..nu).map(|u| (u, u)).collect();
        pairs.extend([(0, 3), (1, 4), (2, 4), (0, 1)]);
        let adj = NormalizedAdjacency::from_pairs(nu, ni, &pairs);
        let e = gaussian(&mut r, nu + ni, 4);
        let t = triples(&mut r, nu, ni, 5);
        let f = |x: &Array2<f64>| bpr_loss(propagate(x.view(), &adj, 2).unwrap().view(), nu, &t).unwrap().0;
        let prop = propagate(e.view(), &adj, 2).unwrap();
        let g = propagate(bpr_loss(prop.view(), nu, &t).unwrap().1.view(), &adj, 2).unwrap();
        rel_err(&g, &fd_gradient(f, &e, H))
    }

    pub fn dispersion(seed: u64, norm: DispersionNorm) -> f64 {
        let mut r = rng(400 + seed);
        let rows = r.random_range(3..=8);
        let z = gaussian(&mut r, rows, 4);
        let v = gaussian(&mut r, 4, 1).column(0).to_owned();
        let out = dispersion_with_probe(z.view(), v.view(), norm).unwrap();
        rel_err(
            &out.grad,
            &fd_gradient(|x| dispersion_with_probe(x.view(), v.view(), norm).unwrap().loss, &z, H),
        )
    }

    pub fn rank(seed: u64) -> f64 {
        let mut r = rng(500 + seed);
        let (nu, ni) = (3, 6);
        let z = gaussian(&mut r, nu + ni, 4);
        let targets = [1, 4];
        let lists = vec![vec![0, 2, 3], vec![5, 1, 2], vec![3, 0, 5]];
        let skip = |u: usize, t: usize| u == 2 && t == 4;
        let eval = |x: &Array2<f64>| rank_promotion_loss(x.slice(s![..nu, ..]), x.slice(s![nu.., ..]), &targets, &lists, skip).unwrap();
        let out = eval(&z);
        let mut g = Array2::zeros(z.dim());
        g.slice_mut(s![..nu, ..]).assign(&out.grad_users);
        g.slice_mut(s![nu.., ..]).assign(&out.grad_items);
        rel_err(&g, &fd_gradient(|x| eval(x).loss, &z, H))
    }

    /// Worst of the item and user gradients, with the pairs held fixed.
    pub fn mitigation(seed: u64) -> f64 {
        let mut r = rng(600 + seed);
        let zi = gaussian(&mut r, 5, 4);
        let zu = gaussian(&mut r, 3, 4);
        let pairs = [(0, 0), (0, 2), (3, 1), (4, 0), (4, 2)];
        let out = mitigation_from_pairs(zi.view(), zu.view(), &pairs).unwrap();
        let fi = fd_gradient(|x| mitigation_from_pairs(x.view(), zu.view(), &pairs).unwrap().loss, &zi, H);
        let fu = fd_gradient(|x| mitigation_from_pairs(zi.view(), x.view(), &pairs).unwrap().loss, &zu, H);
        rel_err(&out.grad_items, &fi).max(rel_err(&out.grad_users, &fu))
    }

    /// `L_D + α·L_R` with the seeded probe held fixed.
    pub fn attack(seed: u64) -> f64 {
        let mut r = rng(700 + seed);
        let (nu, ni) = (3, 5);
        let z = gaussian(&mut r, nu + ni, 4);
        let targets = [2];
        let lists = vec![vec![0, 1], vec![3, 4], vec![1, 4]];
        let f = |x: &Array2<f64>| attack_objective(x.view(), nu, &targets, &lists, |_, _| false, 0.7, seed, DispersionNorm::L1).unwrap();
        let out = f(&z);
        rel_err(&out.grad, &fd_gradient(|x| f(x).loss, &z, H))
    }
}
