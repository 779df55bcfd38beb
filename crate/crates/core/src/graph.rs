//! Bipartite user–item interaction data: loading, splitting, normalized
//! adjacency, popularity statistics and target selection.
//!
//! Users are indexed `0..num_users` and items `0..num_items`. Injected (fake)
//! users always occupy the highest user indices so that the real population is
//! the prefix `0..num_real_users`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeded_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.tsv",
            Split::Validation => "val.tsv",
            Split::Test => "test.tsv",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionGraph {
    num_users: usize,
    num_items: usize,
    num_fake_users: usize,
    edges: Vec<Interaction>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    by_user: Vec<[Vec<usize>; 3]>,
}

fn split_slot(split: Split) -> usize {
    match split {
        Split::Train => 0,
        Split::Validation => 1,
        Split::Test => 2,
    }
}

impl InteractionGraph {
    /// Builds a graph from already-indexed edges, checking index bounds and
    /// per-split uniqueness. Ids default to the decimal index when empty.
    pub fn new(num_users: usize, num_items: usize, edges: Vec<Interaction>, user_ids: Vec<String>, item_ids: Vec<String>) -> Result<Self> {
        let user_ids = if user_ids.is_empty() {
            (0..num_users).map(|u| u.to_string()).collect()
        } else {
            user_ids
        };
        let item_ids = if item_ids.is_empty() {
            (0..num_items).map(|i| i.to_string()).collect()
        } else {
            item_ids
        };
        if user_ids.len() != num_users || item_ids.len() != num_items {
            return Err(Error::invalid("id table length does not match node count"));
        }
        let mut by_user: Vec<[Vec<usize>; 3]> = vec![Default::default(); num_users];
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            if e.user >= num_users || e.item >= num_items {
                return Err(Error::invalid(format!(
                    "edge ({}, {}) out of range for {}x{} graph",
                    e.user, e.item, num_users, num_items
                )));
            }
            if !seen.insert((e.user, e.item, e.split)) {
                return Err(Error::invalid(format!("duplicate edge ({}, {}) in {:?} split", e.user, e.item, e.split)));
            }
            by_user[e.user][split_slot(e.split)].push(e.item);
        }
        for lists in &mut by_user {
            for l in lists.iter_mut() {
                l.sort_unstable();
            }
        }
        Ok(Self {
            num_users,
            num_items,
            num_fake_users: 0,
            edges,
            user_ids,
            item_ids,
            by_user,
        })
    }

    /// Convenience constructor for training-only graphs from index pairs.
    pub fn from_pairs(num_users: usize, num_items: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let edges = pairs
            .iter()
            .map(|&(user, item)| Interaction {
                user,
                item,
                split: Split::Train,
            })
            .collect();
        Self::new(num_users, num_items, edges, vec![], vec![])
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn num_fake_users(&self) -> usize {
        self.num_fake_users
    }

    pub fn num_real_users(&self) -> usize {
        self.num_users - self.num_fake_users
    }

    pub fn is_fake(&self, user: usize) -> bool {
        user >= self.num_real_users()
    }

    pub fn edges(&self) -> &[Interaction] {
        &self.edges
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    /// Sorted item list of `user` in `split`.
    pub fn items_of(&self, user: usize, split: Split) -> &[usize] {
        &self.by_user[user][split_slot(split)]
    }

    pub fn train_items(&self, user: usize) -> &[usize] {
        self.items_of(user, Split::Train)
    }

    pub fn has_train_edge(&self, user: usize, item: usize) -> bool {
        self.train_items(user).binary_search(&item).is_ok()
    }

    pub fn train_pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().filter(|e| e.split == Split::Train).map(|e| (e.user, e.item)).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.edges.iter().filter(|e| e.split == split).count()
    }

    /// Interaction count per item over every split.
    pub fn item_popularity(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_items];
        for e in &self.edges {
            counts[e.item] += 1;
        }
        counts
    }

    /// Item indices from most to least popular; ties broken by ascending index.
    pub fn popularity_ranking(&self) -> Vec<usize> {
        let counts = self.item_popularity();
        let mut order: Vec<usize> = (0..self.num_items).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        order
    }

    /// The least popular 80% of items (the tail of [`popularity_ranking`]).
    ///
    /// [`popularity_ranking`]: Self::popularity_ranking
    pub fn cold_item_pool(&self) -> Vec<usize> {
        let ranking = self.popularity_ranking();
        let pool = ((self.num_items as f64) * 0.8 + 1e-9).floor() as usize;
        ranking[self.num_items - pool..].to_vec()
    }

    /// Returns a copy whose edges carry the given split labels (same order as `edges()`).
    fn relabeled(&self, splits: &[Split]) -> Result<Self> {
        let edges = self.edges.iter().zip(splits).map(|(e, &split)| Interaction { split, ..*e }).collect();
        let mut g = Self::new(self.num_users, self.num_items, edges, self.user_ids.clone(), self.item_ids.clone())?;
        g.num_fake_users = self.num_fake_users;
        Ok(g)
    }

    /// Appends fake users whose (training-only) interactions are `profiles`.
    pub fn with_injected_users(&self, profiles: &[Vec<usize>]) -> Result<Self> {
        let mut edges = self.edges.clone();
        let mut user_ids = self.user_ids.clone();
        for (k, items) in profiles.iter().enumerate() {
            let user = self.num_users + k;
            user_ids.push(format!("fake_{k}"));
            for &item in items {
                edges.push(Interaction {
                    user,
                    item,
                    split: Split::Train,
                });
            }
        }
        let mut g = Self::new(self.num_users + profiles.len(), self.num_items, edges, user_ids, self.item_ids.clone())?;
        g.num_fake_users = self.num_fake_users + profiles.len();
        Ok(g)
    }

    /// Drops every training interaction of `items`; held-out edges are kept so
    /// that evaluation still counts them.
    pub fn without_training_items(&self, items: &HashSet<usize>) -> Result<Self> {
        let edges = self
            .edges
            .iter()
            .filter(|e| !(e.split == Split::Train && items.contains(&e.item)))
            .copied()
            .collect();
        let mut g = Self::new(self.num_users, self.num_items, edges, self.user_ids.clone(), self.item_ids.clone())?;
        g.num_fake_users = self.num_fake_users;
        Ok(g)
    }
}

// ---------------------------------------------------------------------------
// Loading

#[derive(Clone, Debug)]
pub struct LoadReport {
    pub graph: InteractionGraph,
    pub duplicates: usize,
}

pub fn load_interactions(path: &Path) -> Result<LoadReport> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(BufReader::new(file), path)
}

/// Parses `user<TAB>item[<TAB>ignored...]` lines. Lines starting with `#` and
/// blank lines are skipped; every edge is labelled `Train`.
pub fn parse_interactions<R: Read>(reader: BufReader<R>, source: &Path) -> Result<LoadReport> {
    let mut user_index: HashMap<String, usize> = HashMap::new();
    let mut item_index: HashMap<String, usize> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    let mut duplicates = 0;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split('\t');
        let (user, item) = match (fields.next(), fields.next()) {
            (Some(u), Some(i)) if !u.is_empty() && !i.is_empty() => (u, i),
            _ => {
                return Err(Error::Parse {
                    path: source.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("expected \"user<TAB>item\", got {trimmed:?}"),
                })
            }
        };
        let u = *user_index.entry(user.to_string()).or_insert_with(|| {
            user_ids.push(user.to_string());
            user_ids.len() - 1
        });
        let i = *item_index.entry(item.to_string()).or_insert_with(|| {
            item_ids.push(item.to_string());
            item_ids.len() - 1
        });
        if !seen.insert((u, i)) {
            duplicates += 1;
            continue;
        }
        edges.push(Interaction {
            user: u,
            item: i,
            split: Split::Train,
        });
    }
    if edges.is_empty() {
        return Err(Error::invalid(format!("{} contains no interactions", source.display())));
    }
    let graph = InteractionGraph::new(user_ids.len(), item_ids.len(), edges, user_ids, item_ids)?;
    Ok(LoadReport { graph, duplicates })
}

// ---------------------------------------------------------------------------
// Splitting

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    #[default]
    PerUser,
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<()> {
        let r = [self.train, self.validation, self.test];
        if r.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::Config("split ratios must be positive".into()));
        }
        if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("split ratios must sum to 1".into()));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `n` edges; remainder ties favour
    /// train, then validation, then test.
    fn apportion(&self, n: usize) -> [usize; 3] {
        let exact = [self.train * n as f64, self.validation * n as f64, self.test * n as f64];
        let mut counts = exact.map(|x| (x + 1e-9).floor() as usize);
        let mut rest = n - counts.iter().sum::<usize>();
        let mut order = [0usize, 1, 2];
        let frac = |k: usize| exact[k] - counts[k] as f64;
        order.sort_by(|&a, &b| frac(b).partial_cmp(&frac(a)).unwrap().then(a.cmp(&b)));
        for &k in order.iter().cycle() {
            if rest == 0 {
                break;
            }
            counts[k] += 1;
            rest -= 1;
        }
        counts
    }
}

const SPLITS: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

/// Randomly partitions the edges of `graph` into train/validation/test.
///
/// Any user left without a training edge gets one of its held-out edges moved
/// to train (the first one in shuffled order), so single-edge users always
/// keep that edge in train.
pub fn split(graph: &InteractionGraph, ratios: SplitRatios, mode: SplitMode, seed: u64) -> Result<InteractionGraph> {
    ratios.validate()?;
    let mut rng = seeded_rng(seed, 0x5911);
    let mut labels = vec![Split::Train; graph.edges.len()];
    let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); graph.num_users];
    for (k, e) in graph.edges.iter().enumerate() {
        per_user[e.user].push(k);
    }
    match mode {
        SplitMode::PerUser => {
            for idx in per_user.iter_mut() {
                idx.shuffle(&mut rng);
                let counts = ratios.apportion(idx.len());
                let mut pos = 0;
                for (s, &c) in SPLITS.iter().zip(&counts) {
                    for &k in &idx[pos..pos + c] {
                        labels[k] = *s;
                    }
                    pos += c;
                }
            }
        }
        SplitMode::Global => {
            let mut all: Vec<usize> = (0..graph.edges.len()).collect();
            all.shuffle(&mut rng);
            let counts = ratios.apportion(all.len());
            let mut pos = 0;
            for (s, &c) in SPLITS.iter().zip(&counts) {
                for &k in &all[pos..pos + c] {
                    labels[k] = *s;
                }
                pos += c;
            }
            // reassignment picks the user's first edge in shuffled order
            let mut rank = vec![0usize; all.len()];
            for (pos, &k) in all.iter().enumerate() {
                rank[k] = pos;
            }
            for idx in per_user.iter_mut() {
                idx.sort_by_key(|&k| rank[k]);
            }
        }
    }
    for idx in &per_user {
        if !idx.is_empty() && idx.iter().all(|&k| labels[k] != Split::Train) {
            labels[idx[0]] = Split::Train;
        }
    }
    graph.relabeled(&labels)
}

// ---------------------------------------------------------------------------
// Normalized adjacency

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub dim: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        match row.binary_search(&c) {
            Ok(k) => self.values[self.indptr[r] + k],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// `out = self * x` for a dense row-major `x`.
    pub fn mul_dense_into(&self, x: ArrayView2<f64>, out: &mut Array2<f64>) {
        debug_assert_eq!(x.nrows(), self.dim);
        out.fill(0.0);
        let d = x.ncols();
        let xs = x.as_slice().expect("row-major input");
        let os = out.as_slice_mut().expect("row-major output");
        for r in 0..self.dim {
            let orow = &mut os[r * d..(r + 1) * d];
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                let v = self.values[k];
                let xrow = &xs[c * d..(c + 1) * d];
                for (o, &xv) in orow.iter_mut().zip(xrow) {
                    *o += v * xv;
                }
            }
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.dim, self.dim));
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[[r, c]] = v;
            }
        }
        m
    }
}

/// `D^{-1/2} A D^{-1/2}` of the bipartite training graph, users stacked above items.
#[derive(Clone, Debug)]
pub struct NormalizedAdjacency {
    pub num_users: usize,
    pub num_items: usize,
    pub matrix: CsrMatrix,
    /// Node indices (in the stacked layout) with no training edge.
    pub isolated: Vec<usize>,
}

impl NormalizedAdjacency {
    /// Builds the operator from `(user, item)` pairs; an empty edge list yields
    /// the zero operator.
    pub fn from_pairs(num_users: usize, num_items: usize, pairs: &[(usize, usize)]) -> Self {
        let n = num_users + num_items;
        let mut degree = vec![0usize; n];
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, i) in pairs {
            let j = num_users + i;
            degree[u] += 1;
            degree[j] += 1;
            rows[u].push(j);
            rows[j].push(u);
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(2 * pairs.len());
        let mut values = Vec::with_capacity(2 * pairs.len());
        indptr.push(0);
        for (r, cols) in rows.iter_mut().enumerate() {
            cols.sort_unstable();
            for &c in cols.iter() {
                indices.push(c);
                values.push(1.0 / ((degree[r] * degree[c]) as f64).sqrt());
            }
            indptr.push(indices.len());
        }
        let isolated = (0..n).filter(|&v| degree[v] == 0).collect();
        Self {
            num_users,
            num_items,
            matrix: CsrMatrix {
                dim: n,
                indptr,
                indices,
                values,
            },
            isolated,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim
    }

    /// The `(user, item)` pairs the operator was built from, in row order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.matrix.nnz() / 2);
        for u in 0..self.num_users {
            for (c, _) in self.matrix.row(u) {
                out.push((u, c - self.num_users));
            }
        }
        out
    }
}

/// The propagation operator of `graph`'s training edges.
pub fn normalized_adjacency(graph: &InteractionGraph) -> Result<NormalizedAdjacency> {
    let pairs = graph.train_pairs();
    if pairs.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    Ok(NormalizedAdjacency::from_pairs(graph.num_users(), graph.num_items(), &pairs))
}

// ---------------------------------------------------------------------------
// Targets and degree statistics

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSet {
    pub items: Vec<usize>,
    pub seed: u64,
}

impl TargetSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, item: usize) -> bool {
        self.items.contains(&item)
    }
}

/// Uniformly samples `n_targets` items from the cold (bottom-80%) pool.
pub fn select_targets(graph: &InteractionGraph, n_targets: usize, seed: u64) -> Result<TargetSet> {
    let pool = graph.cold_item_pool();
    if pool.len() < n_targets {
        return Err(Error::invalid(format!(
            "cold-item pool has {} items, {} targets requested",
            pool.len(),
            n_targets
        )));
    }
    let mut rng = seeded_rng(seed, 0x7a46);
    let mut items: Vec<usize> = pool.choose_multiple(&mut rng, n_targets).copied().collect();
    items.sort_unstable();
    Ok(TargetSet { items, seed })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegreeStats {
    pub mean_train_degree: f64,
    pub per_user: Vec<usize>,
}

/// Training-edge counts of the real users and their population mean.
pub fn user_degree_stats(graph: &InteractionGraph) -> Result<DegreeStats> {
    let per_user: Vec<usize> = (0..graph.num_real_users()).map(|u| graph.train_items(u).len()).collect();
    let total: usize = per_user.iter().sum();
    if total == 0 || per_user.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    Ok(DegreeStats {
        mean_train_degree: total as f64 / per_user.len() as f64,
        per_user,
    })
}

// ---------------------------------------------------------------------------
// Snapshots

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub num_users: usize,
    pub num_items: usize,
    pub num_fake_users: usize,
    pub train_edges: usize,
    pub validation_edges: usize,
    pub test_edges: usize,
    pub density: f64,
    pub mean_degree: f64,
    pub isolated_nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

pub fn graph_stats(graph: &InteractionGraph) -> GraphStats {
    let total = graph.edges.len();
    let train = graph.train_pairs();
    let adj = NormalizedAdjacency::from_pairs(graph.num_users, graph.num_items, &train);
    GraphStats {
        num_users: graph.num_users,
        num_items: graph.num_items,
        num_fake_users: graph.num_fake_users,
        train_edges: train.len(),
        validation_edges: graph.count(Split::Validation),
        test_edges: graph.count(Split::Test),
        density: total as f64 / (graph.num_users as f64 * graph.num_items as f64),
        mean_degree: user_degree_stats(graph).map(|s| s.mean_train_degree).unwrap_or(0.0),
        isolated_nodes: adj.isolated.len(),
        config_hash: None,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes `train.tsv`, `val.tsv`, `test.tsv` (original ids), the `users.tsv`
/// / `items.tsv` id maps and `stats.json`.
pub fn write_snapshot(graph: &InteractionGraph, dir: &Path, config_hash: Option<&str>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for split in SPLITS {
        let mut out = String::new();
        for e in graph.edges.iter().filter(|e| e.split == split) {
            out.push_str(&graph.user_ids[e.user]);
            out.push('\t');
            out.push_str(&graph.item_ids[e.item]);
            out.push('\n');
        }
        write_file(&dir.join(split.file_name()), &out)?;
    }
    let mut users = String::new();
    for (k, id) in graph.user_ids.iter().enumerate() {
        let kind = if graph.is_fake(k) { "fake" } else { "real" };
        users.push_str(&format!("{k}\t{id}\t{kind}\n"));
    }
    write_file(&dir.join("users.tsv"), &users)?;
    let mut items = String::new();
    for (k, id) in graph.item_ids.iter().enumerate() {
        items.push_str(&format!("{k}\t{id}\n"));
    }
    write_file(&dir.join("items.tsv"), &items)?;
    let mut stats = graph_stats(graph);
    stats.config_hash = config_hash.map(str::to_string);
    write_file(&dir.join("stats.json"), &serde_json::to_string_pretty(&stats)?)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_string).collect())
}

/// Reads a directory produced by [`write_snapshot`].
pub fn read_snapshot(dir: &Path) -> Result<InteractionGraph> {
    let parse_err = |path: &Path, line: usize, msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.to_string(),
    };
    let users_path = dir.join("users.tsv");
    let mut user_ids = Vec::new();
    let mut num_fake = 0;
    for (n, line) in read_lines(&users_path)?.iter().enumerate() {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 2 {
            return Err(parse_err(&users_path, n + 1, "expected index<TAB>id"));
        }
        user_ids.push(f[1].to_string());
        if f.get(2) == Some(&"fake") {
            num_fake += 1;
        }
    }
    let items_path = dir.join("items.tsv");
    let mut item_ids = Vec::new();
    for (n, line) in read_lines(&items_path)?.iter().enumerate() {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 2 {
            return Err(parse_err(&items_path, n + 1, "expected index<TAB>id"));
        }
        item_ids.push(f[1].to_string());
    }
    let user_index: HashMap<&str, usize> = user_ids.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
    let item_index: HashMap<&str, usize> = item_ids.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
    let mut edges = Vec::new();
    for split in SPLITS {
        let path = dir.join(split.file_name());
        for (n, line) in read_lines(&path)?.iter().enumerate() {
            let mut f = line.split('\t');
            let (u, i) = match (f.next(), f.next()) {
                (Some(u), Some(i)) => (u, i),
                _ => return Err(parse_err(&path, n + 1, "expected user<TAB>item")),
            };
            let user = *user_index.get(u).ok_or_else(|| parse_err(&path, n + 1, "unknown user id"))?;
            let item = *item_index.get(i).ok_or_else(|| parse_err(&path, n + 1, "unknown item id"))?;
            edges.push(Interaction { user, item, split });
        }
    }
    let mut g = InteractionGraph::new(user_ids.len(), item_ids.len(), edges, user_ids, item_ids)?;
    g.num_fake_users = num_fake;
    Ok(g)
}
