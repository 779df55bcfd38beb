//! Top-K ranking, Recall@K / HitRatio@K and report tables.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{InteractionGraph, Split, TargetSet};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopK {
    pub items: Vec<usize>,
    /// Fewer than `k` items were rankable.
    pub short: bool,
}

fn by_score(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// The `k` best non-excluded items by descending score; ties go to the lower index.
pub fn top_k(scores: &[f64], k: usize, excluded: impl Fn(usize) -> bool) -> TopK {
    let mut cand: Vec<usize> = (0..scores.len()).filter(|&i| !excluded(i)).collect();
    let cmp = by_score(scores);
    let short = cand.len() < k;
    if cand.len() > k && k > 0 {
        cand.select_nth_unstable_by(k - 1, &cmp);
        cand.truncate(k);
    }
    cand.truncate(k);
    cand.sort_unstable_by(&cmp);
    TopK { items: cand, short }
}

/// User × item inner products of the propagated embeddings.
pub fn score_matrix(prop: ArrayView2<f64>, num_users: usize) -> Array2<f64> {
    let users = prop.slice(s![..num_users, ..]);
    let items = prop.slice(s![num_users.., ..]);
    users.dot(&items.t())
}

/// Top-K lists of every real user, excluding their training items and any
/// `banned` item (removed from the catalog).
pub fn top_k_lists(prop: ArrayView2<f64>, graph: &InteractionGraph, k: usize, banned: Option<&HashSet<usize>>) -> Vec<Vec<usize>> {
    let scores = score_matrix(prop, graph.num_users());
    (0..graph.num_real_users())
        .map(|u| {
            let row = scores.row(u);
            let row = row.as_slice().expect("standard layout");
            let train = graph.train_items(u);
            top_k(row, k, |i| train.binary_search(&i).is_ok() || banned.is_some_and(|b| b.contains(&i))).items
        })
        .collect()
}

/// Mean over real users with a nonempty `split` set of `|TopK ∩ P_u| / |P_u|`.
pub fn recall_from_lists(lists: &[Vec<usize>], graph: &InteractionGraph, split: Split) -> Result<f64> {
    let mut total = 0.0;
    let mut users = 0usize;
    for (u, list) in lists.iter().enumerate() {
        let held = graph.items_of(u, split);
        if held.is_empty() {
            continue;
        }
        let hits = list.iter().filter(|i| held.binary_search(i).is_ok()).count();
        total += hits as f64 / held.len() as f64;
        users += 1;
    }
    if users == 0 {
        return Err(Error::invalid(format!("no users with {split:?} interactions")));
    }
    Ok(total / users as f64)
}

pub fn recall_at_k_split(prop: ArrayView2<f64>, graph: &InteractionGraph, k: usize, split: Split, banned: Option<&HashSet<usize>>) -> Result<f64> {
    recall_from_lists(&top_k_lists(prop, graph, k, banned), graph, split)
}

/// Test-split Recall@K.
pub fn recall_at_k(prop: ArrayView2<f64>, graph: &InteractionGraph, k: usize) -> Result<f64> {
    recall_at_k_split(prop, graph, k, Split::Test, None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitRatio {
    /// Mean over real users and targets of `1[t ∈ TopK(u)]`.
    pub per_target_mean: f64,
    /// Fraction of real users with at least one target in their list.
    pub any_target: f64,
    pub per_target: Vec<f64>,
    pub users: usize,
}

pub fn hit_ratio_from_lists(lists: &[Vec<usize>], targets: &TargetSet) -> Result<HitRatio> {
    if targets.is_empty() {
        return Err(Error::invalid("hit ratio needs at least one target"));
    }
    if lists.is_empty() {
        return Err(Error::invalid("hit ratio needs at least one real user"));
    }
    let mut per_target = vec![0usize; targets.len()];
    let mut any = 0usize;
    for list in lists {
        let mut hit = false;
        for (k, t) in targets.items.iter().enumerate() {
            if list.contains(t) {
                per_target[k] += 1;
                hit = true;
            }
        }
        any += hit as usize;
    }
    let n = lists.len() as f64;
    let per_target: Vec<f64> = per_target.iter().map(|&c| c as f64 / n).collect();
    Ok(HitRatio {
        per_target_mean: per_target.iter().sum::<f64>() / per_target.len() as f64,
        any_target: any as f64 / n,
        per_target,
        users: lists.len(),
    })
}

/// HitRatio@K over the real (non-injected) users.
pub fn hit_ratio_at_k(prop: ArrayView2<f64>, graph: &InteractionGraph, targets: &TargetSet, k: usize) -> Result<HitRatio> {
    hit_ratio_from_lists(&top_k_lists(prop, graph, k, None), targets)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub recall_at_k: f64,
    pub hit_ratio_at_k: f64,
    pub hit_ratio_any_target: f64,
    pub per_target: Vec<f64>,
    pub excluded_users: usize,
    pub seed: u64,
    pub config_hash: String,
}

/// Evaluates one model on the test split.
pub fn evaluate(
    prop: ArrayView2<f64>,
    graph: &InteractionGraph,
    targets: &TargetSet,
    k: usize,
    banned: Option<&HashSet<usize>>,
    seed: u64,
    config_hash: &str,
) -> Result<MetricsReport> {
    let lists = top_k_lists(prop, graph, k, banned);
    let recall = recall_from_lists(&lists, graph, Split::Test)?;
    let hr = hit_ratio_from_lists(&lists, targets)?;
    Ok(MetricsReport {
        k,
        recall_at_k: recall,
        hit_ratio_at_k: hr.per_target_mean,
        hit_ratio_any_target: hr.any_target,
        per_target: hr.per_target,
        excluded_users: graph.num_fake_users(),
        seed,
        config_hash: config_hash.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Report tables

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub seeds: Vec<u64>,
    pub recall_per_seed: Vec<f64>,
    pub hit_ratio_per_seed: Vec<f64>,
    pub recall_mean: f64,
    pub hit_ratio_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub schema_version: u32,
    pub k: usize,
    pub config_hash: String,
    pub rows: Vec<ReportRow>,
}

/// Groups runs by method (first-appearance order) and averages over seeds.
pub fn build_report(runs: &[RunRecord], config_hash: &str) -> Result<ReportTable> {
    let first = runs.first().ok_or_else(|| Error::invalid("report needs at least one run"))?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        if !groups.contains_key(&r.method) {
            order.push(r.method.clone());
        }
        groups.entry(r.method.clone()).or_default().push(r);
    }
    let rows = order
        .into_iter()
        .map(|method| {
            let g = &groups[&method];
            let recall: Vec<f64> = g.iter().map(|r| r.metrics.recall_at_k).collect();
            let hit: Vec<f64> = g.iter().map(|r| r.metrics.hit_ratio_at_k).collect();
            let n = g.len() as f64;
            ReportRow {
                seeds: g.iter().map(|r| r.metrics.seed).collect(),
                recall_mean: recall.iter().sum::<f64>() / n,
                hit_ratio_mean: hit.iter().sum::<f64>() / n,
                recall_per_seed: recall,
                hit_ratio_per_seed: hit,
                method,
            }
        })
        .collect();
    Ok(ReportTable {
        schema_version: REPORT_SCHEMA_VERSION,
        k: first.metrics.k,
        config_hash: config_hash.to_string(),
        rows,
    })
}

impl ReportTable {
    /// One row per method; raw values unscaled, plus a ×10⁻² display column
    /// for the hit ratio.
    pub fn to_csv(&self) -> String {
        let k = self.k;
        let mut out = format!("method,seeds,R@{k},H@{k},H@{k}_x1e-2,R@{k}_per_seed,H@{k}_per_seed,config_hash\n");
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        for r in &self.rows {
            let seeds = r.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(";");
            let _ = writeln!(
                out,
                "{},{},{},{},{:.4},{},{},{}",
                r.method,
                seeds,
                r.recall_mean,
                r.hit_ratio_mean,
                r.hit_ratio_mean * 100.0,
                join(&r.recall_per_seed),
                join(&r.hit_ratio_per_seed),
                self.config_hash
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_candidate() {
        let t = top_k(&[0.3], 5, |_| false);
        assert_eq!(t.items, vec![0]);
        assert!(t.short);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let t = top_k(&[1.0, 2.0, 2.0, 0.5], 2, |_| false);
        assert_eq!(t.items, vec![1, 2]);
        let t = top_k(&[1.0, 1.0, 1.0], 1, |_| false);
        assert_eq!(t.items, vec![0]);
    }

    #[test]
    fn matches_full_sort() {
        let scores = [0.1, -0.4, 0.9, 0.9, 0.3];
        let mut all: Vec<usize> = (0..5).collect();
        all.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        for k in 0..=5 {
            assert_eq!(top_k(&scores, k, |_| false).items, all[..k].to_vec());
        }
        let t = top_k(&scores, 2, |i| i == 2);
        assert_eq!(t.items, vec![3, 4]);
    }

    fn record(method: &str, seed: u64, recall: f64, hit: f64) -> RunRecord {
        RunRecord {
            method: method.into(),
            metrics: MetricsReport {
                k: 50,
                recall_at_k: recall,
                hit_ratio_at_k: hit,
                hit_ratio_any_target: hit,
                per_target: vec![hit],
                excluded_users: 0,
                seed,
                config_hash: "h".into(),
            },
        }
    }

    #[test]
    fn single_run_single_row() {
        let t = build_report(&[record("clean", 1, 0.2, 0.01)], "h").unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].recall_mean, 0.2);
    }

    #[test]
    fn seed_means_and_order() {
        let mut runs = Vec::new();
        for s in 0..5 {
            runs.push(record("undefended", s, 0.1 + s as f64 * 0.01, 0.02));
            runs.push(record("sim", s, 0.2, 0.001 * s as f64));
        }
        let t = build_report(&runs, "h").unwrap();
        assert_eq!(t.rows[0].method, "undefended");
        assert_eq!(t.rows[1].method, "sim");
        let expect = (0..5).map(|s| 0.1 + s as f64 * 0.01).sum::<f64>() / 5.0;
        assert!((t.rows[0].recall_mean - expect).abs() < 1e-15);
        assert_eq!(t.rows[1].hit_ratio_per_seed.len(), 5);
        assert_eq!(t.to_csv().lines().count(), 3);
        assert!(build_report(&[], "h").is_err());
    }
}
