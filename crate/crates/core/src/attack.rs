//! Fake-profile construction: the random baseline and the bi-level CLeaR
//! attack (dispersion promotion + rank promotion, greedy snapping).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{top_k, top_k_lists};
use crate::graph::{user_degree_stats, InteractionGraph, TargetSet};
use crate::seeded_rng;
use crate::spectral::{dispersion_loss, DispersionNorm};
use crate::trainer::{EmbeddingModel, TrainConfig, Trainer};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackBudget {
    pub attack_size: f64,
    /// `ceil(attack_size × real users)`.
    pub max_fake_users: usize,
    /// `floor(mean real-user training degree)`.
    pub per_user_quota: usize,
}

impl AttackBudget {
    pub fn new(graph: &InteractionGraph, attack_size: f64, targets: &TargetSet) -> Result<Self> {
        if !(attack_size > 0.0 && attack_size <= 1.0) {
            return Err(Error::Config(format!("attack size must lie in (0, 1], got {attack_size}")));
        }
        let raw = attack_size * graph.num_real_users() as f64;
        // Guard against 0.01 × 500 landing a hair above 5.
        let max_fake_users = (raw - 1e-9).ceil().max(1.0) as usize;
        let per_user_quota = user_degree_stats(graph)?.mean_train_degree.floor() as usize;
        let budget = Self {
            attack_size,
            max_fake_users,
            per_user_quota,
        };
        budget.check_targets(targets)?;
        Ok(budget)
    }

    fn check_targets(&self, targets: &TargetSet) -> Result<()> {
        if self.per_user_quota < targets.len() {
            return Err(Error::Budget(format!(
                "per-user quota {} cannot cover {} targets",
                self.per_user_quota,
                targets.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Random,
    Clear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaliciousProfileSet {
    pub generator: Generator,
    pub fake_user_ids: Vec<String>,
    /// Item indices per fake user.
    pub profiles: Vec<Vec<usize>>,
    pub targets: Vec<usize>,
    pub budget: AttackBudget,
    pub seed: u64,
    pub alpha: Option<f64>,
    pub outer_iterations: usize,
}

impl MaliciousProfileSet {
    fn new(generator: Generator, profiles: Vec<Vec<usize>>, targets: &TargetSet, budget: AttackBudget, seed: u64) -> Self {
        Self {
            generator,
            fake_user_ids: (0..profiles.len()).map(|k| format!("fake_{k}")).collect(),
            profiles,
            targets: targets.items.clone(),
            budget,
            seed,
            alpha: None,
            outer_iterations: 0,
        }
    }

    /// Budget and content invariants.
    pub fn validate(&self, num_items: usize) -> Result<()> {
        if self.profiles.len() > self.budget.max_fake_users {
            return Err(Error::Budget(format!(
                "{} fake users exceed the budget of {}",
                self.profiles.len(),
                self.budget.max_fake_users
            )));
        }
        for (k, p) in self.profiles.iter().enumerate() {
            if p.len() > self.budget.per_user_quota {
                return Err(Error::Budget(format!(
                    "fake user {k} has {} interactions, quota is {}",
                    p.len(),
                    self.budget.per_user_quota
                )));
            }
            let mut sorted = p.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("fake user {k} repeats an item")));
            }
            if let Some(&bad) = p.iter().find(|&&i| i >= num_items) {
                return Err(Error::invalid(format!("fake user {k} references item {bad} of {num_items}")));
            }
            if let Some(t) = self.targets.iter().find(|t| sorted.binary_search(t).is_err()) {
                return Err(Error::invalid(format!("fake user {k} misses target {t}")));
            }
        }
        Ok(())
    }

    /// `fake_user_id<TAB>item_id` rows, concatenable with a training TSV.
    pub fn to_tsv(&self, item_ids: &[String]) -> String {
        let mut out = String::new();
        for (id, p) in self.fake_user_ids.iter().zip(&self.profiles) {
            for &i in p {
                let _ = writeln!(out, "{id}\t{}", item_ids[i]);
            }
        }
        out
    }

    pub fn write(&self, dir: &Path, item_ids: &[String], config_hash: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tsv = dir.join("profiles.tsv");
        fs::write(&tsv, self.to_tsv(item_ids)).map_err(|e| Error::io(&tsv, e))?;
        let manifest = serde_json::json!({
            "config_hash": config_hash,
            "generator": self.generator,
            "seed": self.seed,
            "alpha": self.alpha,
            "budget": self.budget,
            "outer_iterations": self.outer_iterations,
            "targets": self.targets.iter().map(|&t| &item_ids[t]).collect::<Vec<_>>(),
            "fake_user_ids": self.fake_user_ids,
        });
        let path = dir.join("profiles.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }
}

fn targets_only(targets: &TargetSet, budget: &AttackBudget) -> Vec<Vec<usize>> {
    vec![targets.items.clone(); budget.max_fake_users]
}

/// Every fake user rates all targets plus uniformly drawn filler items up to
/// the quota.
pub fn random_attack(graph: &InteractionGraph, targets: &TargetSet, budget: &AttackBudget, seed: u64) -> Result<MaliciousProfileSet> {
    budget.check_targets(targets)?;
    let mut rng = seeded_rng(seed, 0x4a7d);
    let pool: Vec<usize> = (0..graph.num_items()).filter(|&i| !targets.contains(i)).collect();
    let filler = (budget.per_user_quota - targets.len()).min(pool.len());
    let profiles = (0..budget.max_fake_users)
        .map(|_| {
            let mut p: Vec<usize> = pool.choose_multiple(&mut rng, filler).copied().collect();
            p.extend(&targets.items);
            p
        })
        .collect();
    let set = MaliciousProfileSet::new(Generator::Random, profiles, targets, *budget, seed);
    set.validate(graph.num_items())?;
    Ok(set)
}

/// `g(x) = x` for `x ≥ 0`, `eˣ − 1` otherwise.
pub fn cw_margin(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn cw_margin_slope(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        x.exp()
    }
}

#[derive(Clone, Debug)]
pub struct RankLoss {
    pub loss: f64,
    pub grad_users: Array2<f64>,
    pub grad_items: Array2<f64>,
}

/// `L_R = Σ_u Σ_t g(z_u·z_t − min_{i ∈ TopK(u) \ targets} z_u·z_i)` over the
/// users that have a list in `lists`. `skip(u, t)` drops pairs where the user
/// already interacts with the target. The minimising item is held fixed when
/// differentiating.
pub fn rank_promotion_loss(
    z_users: ArrayView2<f64>,
    z_items: ArrayView2<f64>,
    targets: &[usize],
    lists: &[Vec<usize>],
    skip: impl Fn(usize, usize) -> bool,
) -> Result<RankLoss> {
    if lists.len() > z_users.nrows() {
        return Err(Error::Dimension(format!("{} top-K lists for {} user rows", lists.len(), z_users.nrows())));
    }
    if z_users.ncols() != z_items.ncols() {
        return Err(Error::Dimension("user and item embeddings differ in width".into()));
    }
    let mut grad_users = Array2::zeros(z_users.dim());
    let mut grad_items = Array2::zeros(z_items.dim());
    let mut loss = 0.0;
    let is_target = |i: &usize| targets.contains(i);
    for (u, list) in lists.iter().enumerate() {
        let zu = z_users.row(u);
        let score = |i: usize| zu.dot(&z_items.row(i));
        let lowest = list
            .iter()
            .copied()
            .filter(|i| !is_target(i))
            .map(|i| (score(i), i))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (low_score, low) = match lowest {
            Some(x) => x,
            None => {
                // Whole list is targets: compare against the best non-target item.
                let scores: Vec<f64> = (0..z_items.nrows()).map(score).collect();
                match top_k(&scores, 1, |i| is_target(&i)).items.first() {
                    Some(&i) => (scores[i], i),
                    None => continue,
                }
            }
        };
        for &t in targets {
            if skip(u, t) {
                continue;
            }
            let x = score(t) - low_score;
            loss += cw_margin(x);
            let slope = cw_margin_slope(x);
            let diff = &z_items.row(t) - &z_items.row(low);
            grad_users.row_mut(u).scaled_add(slope, &diff);
            grad_items.row_mut(t).scaled_add(slope, &zu);
            grad_items.row_mut(low).scaled_add(-slope, &zu);
        }
    }
    Ok(RankLoss { loss, grad_users, grad_items })
}

#[derive(Clone, Debug)]
pub struct AttackObjective {
    /// `L_D + α·L_R`, the quantity the attacker increases.
    pub loss: f64,
    pub dispersion: f64,
    pub rank: f64,
    /// Gradient with respect to the stacked matrix.
    pub grad: Array2<f64>,
}

/// `L_attack = L_D + α·L_R` on a stacked users-over-items matrix `z`. The
/// dispersion term covers every row; the rank term covers the users with a
/// list in `lists`.
#[allow(clippy::too_many_arguments)]
pub fn attack_objective(
    z: ArrayView2<f64>,
    num_users: usize,
    targets: &[usize],
    lists: &[Vec<usize>],
    skip: impl Fn(usize, usize) -> bool,
    alpha: f64,
    seed: u64,
    norm: DispersionNorm,
) -> Result<AttackObjective> {
    if !(alpha >= 0.0) {
        return Err(Error::Config(format!("alpha must be >= 0, got {alpha}")));
    }
    let disp = dispersion_loss(z, seed, norm)?;
    let mut grad = disp.grad;
    let mut rank = 0.0;
    if alpha > 0.0 {
        let r = rank_promotion_loss(z.slice(s![..num_users, ..]), z.slice(s![num_users.., ..]), targets, lists, skip)?;
        rank = r.loss;
        grad.slice_mut(s![..num_users, ..]).scaled_add(alpha, &r.grad_users);
        grad.slice_mut(s![num_users.., ..]).scaled_add(alpha, &r.grad_items);
    }
    Ok(AttackObjective {
        loss: disp.loss + alpha * rank,
        dispersion: disp.loss,
        rank,
        grad,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClearConfig {
    /// Weight of the rank-promotion term.
    pub alpha: f64,
    pub outer_iterations: usize,
    /// Surrogate training epochs per outer iteration.
    pub inner_epochs: usize,
    /// Ascent steps on the fake-user embeddings per outer iteration.
    pub ascent_steps: usize,
    /// Step length relative to the mean fake-embedding norm.
    pub step_size: f64,
    /// List length for the rank term.
    pub top_k: usize,
    pub norm: DispersionNorm,
    pub seed: u64,
}

impl Default for ClearConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            outer_iterations: 10,
            inner_epochs: 20,
            ascent_steps: 10,
            step_size: 0.5,
            top_k: 50,
            norm: DispersionNorm::L1,
            seed: 0,
        }
    }
}

/// Relaxed outer problem: fake-user embeddings are free, and each item row
/// moves with them through its normalised adjacency weights, so
/// `z_i ← z_i + Σ_f Ã[i, f]·e_f`.
struct Relaxation {
    /// (item, fake index, weight).
    coupling: Vec<(usize, usize, f64)>,
}

impl Relaxation {
    fn new(poisoned: &InteractionGraph, first_fake: usize) -> Self {
        let popularity = poisoned.item_popularity();
        let mut coupling = Vec::new();
        for f in 0..poisoned.num_fake_users() {
            let items = poisoned.train_items(first_fake + f);
            for &i in items {
                let w = 1.0 / ((items.len() * popularity[i]) as f64).sqrt();
                coupling.push((i, f, w));
            }
        }
        Self { coupling }
    }

    /// Stacked matrix with the fake rows replaced by `fake` and item rows
    /// shifted by their coupling to the change in fake rows.
    fn apply(&self, base: &Array2<f64>, first_fake: usize, fake: &Array2<f64>) -> Array2<f64> {
        let nf = fake.nrows();
        let nu = first_fake + nf;
        let mut z = base.clone();
        let delta = fake - &base.slice(s![first_fake..nu, ..]);
        z.slice_mut(s![first_fake..nu, ..]).assign(fake);
        for &(i, f, w) in &self.coupling {
            z.row_mut(nu + i).scaled_add(w, &delta.row(f));
        }
        z
    }

    /// Pulls a stacked gradient back onto the fake rows.
    fn pull_back(&self, grad: &Array2<f64>, first_fake: usize, nf: usize) -> Array2<f64> {
        let nu = first_fake + nf;
        let mut g = grad.slice(s![first_fake..nu, ..]).to_owned();
        for &(i, f, w) in &self.coupling {
            g.row_mut(f).scaled_add(w, &grad.row(nu + i));
        }
        g
    }
}

/// Per fake user: the `quota − |targets|` non-target items with the largest
/// inner product with the fake embedding, followed by every target.
fn greedy_profiles(fake: &Array2<f64>, z_items: ArrayView2<f64>, targets: &TargetSet, quota: usize) -> Vec<Vec<usize>> {
    let filler = quota - targets.len();
    fake.rows()
        .into_iter()
        .map(|e| {
            let scores = z_items.dot(&e).to_vec();
            let mut p = top_k(&scores, filler, |i| targets.contains(i)).items;
            p.extend(&targets.items);
            p
        })
        .collect()
}

fn normalized_profiles(profiles: &[Vec<usize>]) -> Vec<Vec<usize>> {
    profiles
        .iter()
        .map(|p| {
            let mut q = p.clone();
            q.sort_unstable();
            q
        })
        .collect()
}

/// Alternates surrogate training on the poisoned graph with ascent on the
/// relaxed attack objective and greedy snapping, until the profiles stop
/// changing or `outer_iterations` is reached.
pub fn clear_attack(
    graph: &InteractionGraph,
    targets: &TargetSet,
    budget: &AttackBudget,
    train_config: &TrainConfig,
    config: &ClearConfig,
) -> Result<MaliciousProfileSet> {
    budget.check_targets(targets)?;
    if graph.num_fake_users() > 0 {
        return Err(Error::invalid("attack graph already contains injected users"));
    }
    if config.step_size < 0.0 || !config.step_size.is_finite() {
        return Err(Error::Config(format!("step size must be >= 0, got {}", config.step_size)));
    }
    let first_fake = graph.num_users();
    let nf = budget.max_fake_users;
    let mut profiles = targets_only(targets, budget);
    let mut model: Option<EmbeddingModel> = None;
    let mut iterations = 0;

    for outer in 0..config.outer_iterations {
        let poisoned = graph.with_injected_users(&profiles)?;
        let trained = (|| {
            let mut trainer = match model.take() {
                Some(m) => Trainer::with_model(&poisoned, train_config, m)?,
                None => Trainer::new(&poisoned, train_config)?,
            };
            for _ in 0..config.inner_epochs {
                trainer.run_epoch(None)?;
            }
            let prop = trainer.propagated()?;
            Ok::<_, Error>((trainer.into_model(), prop))
        })();
        let (m, prop) = match trained {
            Ok(x) => x,
            Err(e @ Error::Numerical(_)) => {
                log::warn!("surrogate training diverged at outer iteration {outer}: {e}; keeping last profiles");
                break;
            }
            Err(e) => return Err(e),
        };
        model = Some(m);
        iterations = outer + 1;

        let lists = top_k_lists(prop.view(), &poisoned, config.top_k, None);
        let skip = |u: usize, t: usize| poisoned.has_train_edge(u, t);
        let relax = Relaxation::new(&poisoned, first_fake);
        let mut fake = prop.slice(s![first_fake..first_fake + nf, ..]).to_owned();
        let scale = fake.rows().into_iter().map(|r| r.dot(&r).sqrt()).sum::<f64>() / nf as f64;
        for step in 0..config.ascent_steps {
            let z = relax.apply(&prop, first_fake, &fake);
            let seed = config.seed.wrapping_mul(0x9e37_79b9).wrapping_add((outer * 1000 + step) as u64);
            let obj = attack_objective(z.view(), poisoned.num_users(), &targets.items, &lists, skip, config.alpha, seed, config.norm)?;
            let g = relax.pull_back(&obj.grad, first_fake, nf);
            let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(gnorm > 0.0) || !gnorm.is_finite() {
                break;
            }
            fake.scaled_add(config.step_size * scale / gnorm, &g);
            log::debug!("outer {outer} step {step}: L_D={:.4} L_R={:.4}", obj.dispersion, obj.rank);
        }

        let z_items = prop.slice(s![poisoned.num_users().., ..]);
        let next = greedy_profiles(&fake, z_items, targets, budget.per_user_quota);
        let fixed = normalized_profiles(&next) == normalized_profiles(&profiles);
        profiles = next;
        if fixed {
            break;
        }
    }

    let mut set = MaliciousProfileSet::new(Generator::Clear, profiles, targets, *budget, config.seed);
    set.alpha = Some(config.alpha);
    set.outer_iterations = iterations;
    set.validate(graph.num_items())?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::select_targets;
    use crate::synth::{generate_synthetic, SyntheticSpec};

    fn setup() -> (InteractionGraph, TargetSet) {
        let g = generate_synthetic(&SyntheticSpec {
            users: 60,
            items: 80,
            density: 0.15,
            seed: 2,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let t = select_targets(&g, 3, 1).unwrap();
        (g, t)
    }

    #[test]
    fn margin_branches() {
        assert_eq!(cw_margin(0.0), 0.0);
        assert_eq!(cw_margin(2.0), 2.0);
        assert!((cw_margin(0.5f64.ln()) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn budget_counts() {
        let (g, t) = setup();
        let b = AttackBudget::new(&g, 0.05, &t).unwrap();
        assert_eq!(b.max_fake_users, 3);
        assert_eq!(b.per_user_quota, user_degree_stats(&g).unwrap().mean_train_degree as usize);
        let big = select_targets(&g, 60, 1).unwrap();
        assert!(matches!(AttackBudget::new(&g, 0.05, &big), Err(Error::Budget(_))));
    }

    #[test]
    fn random_profiles_respect_budget_and_seed() {
        let (g, t) = setup();
        let b = AttackBudget::new(&g, 0.05, &t).unwrap();
        let a = random_attack(&g, &t, &b, 7).unwrap();
        assert_eq!(a, random_attack(&g, &t, &b, 7).unwrap());
        assert!(a.profiles.iter().all(|p| p.len() == b.per_user_quota));
        a.validate(g.num_items()).unwrap();
    }

    #[test]
    fn quota_equal_to_targets_gives_targets_only() {
        let (g, t) = setup();
        let b = AttackBudget {
            attack_size: 0.05,
            max_fake_users: 2,
            per_user_quota: t.len(),
        };
        let a = random_attack(&g, &t, &b, 1).unwrap();
        assert!(a.profiles.iter().all(|p| p == &t.items));
        let cfg = TrainConfig {
            dim: 8,
            epochs: 1,
            ..TrainConfig::default()
        };
        let c = clear_attack(
            &g,
            &t,
            &b,
            &cfg,
            &ClearConfig {
                inner_epochs: 1,
                ..ClearConfig::default()
            },
        )
        .unwrap();
        assert!(c.profiles.iter().all(|p| p == &t.items));
    }

    #[test]
    fn zero_outer_iterations_is_targets_only() {
        let (g, t) = setup();
        let b = AttackBudget::new(&g, 0.05, &t).unwrap();
        let c = clear_attack(
            &g,
            &t,
            &b,
            &TrainConfig::default(),
            &ClearConfig {
                outer_iterations: 0,
                ..ClearConfig::default()
            },
        )
        .unwrap();
        assert_eq!(c.outer_iterations, 0);
        assert!(c.profiles.iter().all(|p| p == &t.items));
    }

    #[test]
    fn validation_catches_violations() {
        let (g, t) = setup();
        let b = AttackBudget::new(&g, 0.05, &t).unwrap();
        let mut a = random_attack(&g, &t, &b, 1).unwrap();
        let dup = a.profiles[0][0];
        a.profiles[0].push(dup);
        assert!(a.validate(g.num_items()).is_err());
        let mut a = random_attack(&g, &t, &b, 1).unwrap();
        a.profiles[0].retain(|i| *i != t.items[0]);
        assert!(a.validate(g.num_items()).is_err());
        let mut a = random_attack(&g, &t, &b, 1).unwrap();
        a.profiles.push(t.items.clone());
        a.profiles.push(t.items.clone());
        a.profiles.push(t.items.clone());
        assert!(matches!(a.validate(g.num_items()), Err(Error::Budget(_))));
    }

    #[test]
    fn tsv_rows_use_ids() {
        let (g, t) = setup();
        let b = AttackBudget::new(&g, 0.02, &t).unwrap();
        let a = random_attack(&g, &t, &b, 1).unwrap();
        let tsv = a.to_tsv(g.item_ids());
        assert_eq!(tsv.lines().count(), b.per_user_quota * b.max_fake_users);
        assert!(tsv.starts_with("fake_0\t"));
    }

    #[test]
    fn all_target_list_falls_back_to_best_other_item() {
        use ndarray::array;
        let zu = array![[1.0, 0.0]];
        let zi = array![[0.5, 0.0], [0.9, 0.0], [0.2, 0.0], [2.0, 0.0]];
        // Targets 1 and 3 fill the list; best non-target is item 0.
        let r = rank_promotion_loss(zu.view(), zi.view(), &[1, 3], &[vec![3, 1]], |_, _| false).unwrap();
        let expect = cw_margin(0.9 - 0.5) + cw_margin(2.0 - 0.5);
        assert!((r.loss - expect).abs() < 1e-12);
    }
}
