//! Seeded synthetic bipartite graphs with power-law item popularity and
//! lognormal user activity.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::InteractionGraph;
use crate::seeded_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    /// Popularity of the item at popularity rank r is proportional to (r+1)^-exponent.
    pub exponent: f64,
    /// Target edge count is round(density · users · items).
    pub density: f64,
    /// Shape of the lognormal user-degree distribution.
    pub degree_sigma: f64,
    /// Users and items are assigned to this many taste groups.
    pub communities: usize,
    /// Extra weight multiplier for items in the user's own group.
    pub affinity: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            users: 500,
            items: 800,
            exponent: 1.0,
            density: 0.04,
            degree_sigma: 0.6,
            communities: 8,
            affinity: 4.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.users < 10 || self.items < 10 {
            return Err(Error::Config(format!(
                "synthetic graph needs at least 10 users and 10 items, got {}x{}",
                self.users, self.items
            )));
        }
        if !(self.exponent > 0.0) || !self.exponent.is_finite() {
            return Err(Error::Config(format!("power-law exponent must be > 0, got {}", self.exponent)));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::Config(format!("density must lie in (0, 1], got {}", self.density)));
        }
        if !(self.degree_sigma >= 0.0) || !(self.affinity >= 0.0) || self.communities == 0 {
            return Err(Error::Config("degree_sigma and affinity must be >= 0, communities >= 1".into()));
        }
        Ok(())
    }
}

/// Integer degrees proportional to `raw`, each in `[1, cap]`, summing to
/// `total` whenever that is feasible.
fn apportion_degrees(raw: &[f64], total: usize, cap: usize) -> Vec<usize> {
    let n = raw.len();
    let total = total.clamp(n, n * cap);
    let mut deg = vec![1usize; n];
    let mut left = total - n;
    // Spread the remainder proportionally, then hand out what capping and
    // flooring left over by largest fractional part.
    while left > 0 {
        let open: Vec<usize> = (0..n).filter(|&u| deg[u] < cap).collect();
        let mass: f64 = open.iter().map(|&u| raw[u]).sum();
        let mut fracs = Vec::with_capacity(open.len());
        let mut given = 0;
        for &u in &open {
            let share = left as f64 * raw[u] / mass;
            let whole = (share.floor() as usize).min(cap - deg[u]);
            deg[u] += whole;
            given += whole;
            fracs.push((share - share.floor(), u));
        }
        left -= given;
        if given == 0 {
            fracs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for &(_, u) in fracs.iter().take(left) {
                deg[u] += 1;
                left -= 1;
            }
        }
    }
    deg
}

/// Draws a graph with all edges in the training split.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<InteractionGraph> {
    spec.validate()?;
    let (nu, ni) = (spec.users, spec.items);
    let mut rng = seeded_rng(spec.seed, 0x5e7);

    let mut order: Vec<usize> = (0..ni).collect();
    order.shuffle(&mut rng);
    let mut popularity = vec![0.0; ni];
    for (rank, &item) in order.iter().enumerate() {
        popularity[item] = ((rank + 1) as f64).powf(-spec.exponent);
    }
    let item_group: Vec<usize> = (0..ni).map(|_| rng.random_range(0..spec.communities)).collect();
    let user_group: Vec<usize> = (0..nu).map(|_| rng.random_range(0..spec.communities)).collect();

    let lognormal = LogNormal::new(0.0, spec.degree_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let raw: Vec<f64> = (0..nu).map(|_| lognormal.sample(&mut rng)).collect();
    let total = (spec.density * nu as f64 * ni as f64).round() as usize;
    let degrees = apportion_degrees(&raw, total, ni);

    let items: Vec<usize> = (0..ni).collect();
    let mut pairs = Vec::with_capacity(degrees.iter().sum());
    for u in 0..nu {
        let weight = |&i: &usize| {
            let boost = if item_group[i] == user_group[u] { 1.0 + spec.affinity } else { 1.0 };
            popularity[i] * boost
        };
        let chosen = items
            .choose_multiple_weighted(&mut rng, degrees[u], weight)
            .map_err(|e| Error::numerical(format!("weighted sampling failed: {e}")))?;
        pairs.extend(chosen.map(|&i| (u, i)));
    }
    InteractionGraph::from_pairs(nu, ni, &pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_count_matches_density() {
        let spec = SyntheticSpec {
            density: 0.005,
            seed: 2,
            ..SyntheticSpec::default()
        };
        let g = generate_synthetic(&spec).unwrap();
        let edges = g.train_pairs().len() as f64;
        assert!((edges - 2000.0).abs() <= 100.0, "{edges}");
    }

    #[test]
    fn steep_exponent_concentrates_popularity() {
        let spec = SyntheticSpec {
            exponent: 4.0,
            density: 0.005,
            seed: 3,
            ..SyntheticSpec::default()
        };
        let g = generate_synthetic(&spec).unwrap();
        let mut pop = g.item_popularity();
        pop.sort_unstable_by(|a, b| b.cmp(a));
        let top = pop[..spec.items / 100].iter().sum::<usize>() as f64;
        let share = top / pop.iter().sum::<usize>() as f64;
        assert!(share > 0.5, "top-1% share {share}");
    }

    #[test]
    fn same_seed_same_graph() {
        let spec = SyntheticSpec {
            users: 40,
            items: 60,
            density: 0.1,
            seed: 9,
            ..SyntheticSpec::default()
        };
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
        let other = SyntheticSpec { seed: 10, ..spec.clone() };
        assert_ne!(generate_synthetic(&spec).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn every_user_has_an_edge() {
        let spec = SyntheticSpec {
            users: 30,
            items: 20,
            density: 0.06,
            degree_sigma: 2.0,
            seed: 1,
            ..SyntheticSpec::default()
        };
        let g = generate_synthetic(&spec).unwrap();
        assert!((0..30).all(|u| !g.train_items(u).is_empty()));
    }

    #[test]
    fn rejects_tiny_or_flat_specs() {
        let tiny = SyntheticSpec {
            users: 5,
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&tiny).is_err());
        let flat = SyntheticSpec {
            exponent: 0.0,
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&flat).is_err());
    }

    #[test]
    fn apportion_hits_total_under_caps() {
        let d = apportion_degrees(&[1.0, 100.0, 1.0], 12, 5);
        assert_eq!(d.iter().sum::<usize>(), 12);
        assert!(d.iter().all(|&x| (1..=5).contains(&x)));
        assert_eq!(d[1], 5);
    }
}
