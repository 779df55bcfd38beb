//! End-to-end experiments: build or load a graph, train, poison, defend and
//! score, writing every artifact under one output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{clear_attack, random_attack, AttackBudget, ClearConfig, MaliciousProfileSet};
use crate::defense::{sim_train, write_detection, DefenseConfig, DefenseMode};
use crate::error::{Error, Result};
use crate::eval::{build_report, evaluate, ReportTable, RunRecord};
use crate::graph::{load_interactions, normalized_adjacency, select_targets, split, write_snapshot, InteractionGraph, SplitMode, SplitRatios, TargetSet};
use crate::spectral::{reconstruction_csv, spectrum_report};
use crate::synth::{generate_synthetic, SyntheticSpec};
use crate::trainer::{train, EmbeddingModel, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dataset {
    /// Whitespace-separated `user item` lines.
    File {
        path: PathBuf,
    },
    Synthetic(SyntheticSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMethod {
    None,
    Random,
    Clear,
}

impl AttackMethod {
    pub fn name(self) -> &'static str {
        match self {
            AttackMethod::None => "none",
            AttackMethod::Random => "random",
            AttackMethod::Clear => "clear",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackSpec {
    /// Every listed scenario is trained and scored; `none` is the clean model.
    pub methods: Vec<AttackMethod>,
    /// Fake users as a fraction of real users.
    pub attack_size: f64,
    pub num_targets: usize,
    pub clear: ClearConfig,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            methods: vec![AttackMethod::None],
            attack_size: 0.01,
            num_targets: 10,
            clear: ClearConfig::default(),
        }
    }
}

pub fn defense_name(mode: DefenseMode) -> &'static str {
    match mode {
        DefenseMode::Full => "sim",
        DefenseMode::WithoutSuppression => "sim_wo_as",
        DefenseMode::WithoutDetection => "sim_wo_ad",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Dataset,
    pub split: SplitRatios,
    pub split_mode: SplitMode,
    pub train: TrainConfig,
    pub attack: AttackSpec,
    /// Each entry is applied to every attack scenario; empty disables the
    /// defense.
    pub defenses: Vec<DefenseConfig>,
    pub k: usize,
    pub output_dir: PathBuf,
    /// Each seed reseeds the generator, split, targets, training, attack and
    /// defense.
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: Dataset::Synthetic(SyntheticSpec::default()),
            split: SplitRatios::default(),
            split_mode: SplitMode::default(),
            train: TrainConfig::default(),
            attack: AttackSpec::default(),
            defenses: Vec::new(),
            k: 50,
            output_dir: PathBuf::from("runs"),
            seeds: vec![0],
        }
    }
}

impl ExperimentConfig {
    /// The 500 × 800 synthetic benchmark at desk-scale training settings,
    /// with random and CLeaR attacks and the full defense plus both
    /// ablations.
    pub fn benchmark() -> Self {
        let defense = DefenseConfig {
            rank: 4,
            random_flagged: 11,
            ..DefenseConfig::default()
        };
        Self {
            train: TrainConfig {
                dim: 64,
                epochs: 40,
                learning_rate: 0.01,
                l2: 1e-2,
                contrast_nodes: Some(256),
                ..TrainConfig::default()
            },
            attack: AttackSpec {
                methods: vec![AttackMethod::None, AttackMethod::Random, AttackMethod::Clear],
                ..AttackSpec::default()
            },
            defenses: [DefenseMode::Full, DefenseMode::WithoutSuppression, DefenseMode::WithoutDetection]
                .into_iter()
                .map(|mode| DefenseConfig { mode, ..defense.clone() })
                .collect(),
            seeds: (0..5).collect(),
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if let Dataset::Synthetic(spec) = &self.dataset {
            spec.validate()?;
        }
        for d in &self.defenses {
            d.validate()?;
        }
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if self.seeds.is_empty() || self.attack.methods.is_empty() {
            return Err(Error::Config("need at least one seed and one attack method".into()));
        }
        if self.attack.num_targets == 0 {
            return Err(Error::Config("num_targets must be positive".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form; output paths do not enter
    /// the hash.
    pub fn hash(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&canonical)?)))
    }

    /// Copy with every seeded component set to `seed`.
    pub fn for_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        if let Dataset::Synthetic(spec) = &mut c.dataset {
            spec.seed = seed;
        }
        c.train.seed = seed;
        c.attack.clear.seed = seed;
        for d in &mut c.defenses {
            d.seed = seed;
        }
        c.seeds = vec![seed];
        c
    }
}

/// Files written so far, for the manifest.
#[derive(Default)]
struct Artifacts {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn record(&mut self, path: &Path) {
        self.files.push(path.to_path_buf());
    }

    fn write(&mut self, path: &Path, contents: &str) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, contents).map_err(|e| Error::io(path, e))?;
        self.record(path);
        Ok(())
    }

    fn manifest(&self, config_hash: &str) -> Result<String> {
        let mut entries = Vec::new();
        for f in &self.files {
            let bytes = fs::read(f).map_err(|e| Error::io(f, e))?;
            let rel = f.strip_prefix(&self.root).unwrap_or(f);
            entries.push(serde_json::json!({
                "path": rel.to_string_lossy(),
                "sha256": hex::encode(Sha256::digest(&bytes)),
            }));
        }
        Ok(serde_json::to_string_pretty(&serde_json::json!({
            "config_hash": config_hash,
            "version": env!("CARGO_PKG_VERSION"),
            "files": entries,
        }))?)
    }
}

/// Graph with its split applied, before any poisoning.
pub fn prepare_graph(config: &ExperimentConfig, seed: u64) -> Result<InteractionGraph> {
    let raw = match &config.dataset {
        Dataset::File { path } => load_interactions(path)?.graph,
        Dataset::Synthetic(spec) => generate_synthetic(&SyntheticSpec { seed, ..spec.clone() })?,
    };
    split(&raw, config.split, config.split_mode, seed)
}

/// Poisoned profiles for one scenario, or `None` for the clean run.
pub fn build_attack(
    method: AttackMethod,
    graph: &InteractionGraph,
    targets: &TargetSet,
    spec: &AttackSpec,
    train_config: &TrainConfig,
    seed: u64,
) -> Result<Option<MaliciousProfileSet>> {
    let budget = AttackBudget::new(graph, spec.attack_size, targets)?;
    match method {
        AttackMethod::None => Ok(None),
        AttackMethod::Random => random_attack(graph, targets, &budget, seed).map(Some),
        AttackMethod::Clear => {
            let clear = ClearConfig { seed, ..spec.clear.clone() };
            clear_attack(graph, targets, &budget, train_config, &clear).map(Some)
        }
    }
}

struct SeedRun<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    hash: &'a str,
    dir: Option<PathBuf>,
    stage: String,
}

impl SeedRun<'_> {
    fn path(&self, rel: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(rel))
    }

    fn save_model(&self, art: &mut Artifacts, model: &EmbeddingModel, graph: &InteractionGraph, name: &str) -> Result<()> {
        let Some(dir) = self.path(name) else { return Ok(()) };
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let ckpt = dir.join("checkpoint.json");
        model.save(&ckpt, Some(self.hash))?;
        art.record(&ckpt);
        let prop = model.propagate(&normalized_adjacency(graph)?)?;
        let spectrum = spectrum_report(prop.slice(ndarray::s![graph.num_users().., ..]))?;
        art.write(&dir.join("spectrum.csv"), &spectrum.to_csv())
    }

    fn score(
        &self,
        model: &EmbeddingModel,
        graph: &InteractionGraph,
        targets: &TargetSet,
        banned: Option<&std::collections::HashSet<usize>>,
        method: String,
    ) -> Result<RunRecord> {
        let prop = model.propagate(&normalized_adjacency(graph)?)?;
        let metrics = evaluate(prop.view(), graph, targets, self.config.k, banned, self.seed, self.hash)?;
        Ok(RunRecord { method, metrics })
    }

    fn run(&mut self, art: &mut Artifacts) -> Result<Vec<RunRecord>> {
        let config = self.config.for_seed(self.seed);
        let seed = self.seed;
        self.stage = "graph".into();
        let graph = prepare_graph(&config, seed)?;
        if let Some(dir) = self.path("graph") {
            write_snapshot(&graph, &dir, Some(self.hash))?;
            for f in ["train.tsv", "val.tsv", "test.tsv", "users.tsv", "items.tsv", "stats.json"] {
                art.record(&dir.join(f));
            }
        }
        let targets = select_targets(&graph, config.attack.num_targets, seed)?;
        if let Some(p) = self.path("targets.json") {
            let ids: Vec<&String> = targets.items.iter().map(|&i| &graph.item_ids()[i]).collect();
            art.write(
                &p,
                &serde_json::to_string_pretty(&serde_json::json!({"config_hash": self.hash, "seed": seed, "targets": ids}))?,
            )?;
        }

        let mut runs = Vec::new();
        for &method in &config.attack.methods {
            let name = method.name();
            self.stage = format!("attack:{name}");
            let profiles = build_attack(method, &graph, &targets, &config.attack, &config.train, seed)?;
            let poisoned = match &profiles {
                Some(p) => {
                    if let Some(dir) = self.path(&format!("{name}/profiles")) {
                        p.write(&dir, graph.item_ids(), self.hash)?;
                        art.record(&dir.join("profiles.tsv"));
                        art.record(&dir.join("profiles.json"));
                    }
                    graph.with_injected_users(&p.profiles)?
                }
                None => graph.clone(),
            };

            self.stage = format!("train:{name}");
            let (model, log) = train(&poisoned, &config.train)?;
            if let Some(p) = self.path(&format!("{name}/train_log.csv")) {
                art.write(&p, &log.to_csv())?;
            }
            self.save_model(art, &model, &poisoned, name)?;
            runs.push(self.score(&model, &poisoned, &targets, None, name.to_string())?);

            for defense in &config.defenses {
                let dname = defense_name(defense.mode);
                let label = format!("{name}+{dname}");
                self.stage = format!("defend:{label}");
                let out = sim_train(&poisoned, &config.train, defense)?;
                self.save_model(art, &out.model, &out.graph, &label)?;
                if let (Some(det), Some(dir)) = (out.detections.last(), self.path(&label)) {
                    let p = dir.join("detection.json");
                    write_detection(det, poisoned.item_ids(), &p)?;
                    art.record(&p);
                    art.write(&dir.join("epsilon.csv"), &reconstruction_csv(&det.epsilon, poisoned.item_ids()))?;
                }
                let banned = (!out.banned.is_empty()).then_some(&out.banned);
                runs.push(self.score(&out.model, &out.graph, &targets, banned, label)?);
            }
        }
        Ok(runs)
    }
}

/// Runs one seed without writing anything.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let hash = config.hash()?;
    let mut run = SeedRun {
        config,
        seed,
        hash: &hash,
        dir: None,
        stage: String::new(),
    };
    run.run(&mut Artifacts::default())
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub dir: PathBuf,
    pub config_hash: String,
    pub report: ReportTable,
}

/// Runs every seed under `<output_dir>/<hash prefix>/seed_<s>/` and writes
/// `report.json`, `report.csv`, `config.toml` and `manifest.json` at the top.
/// On failure the partial artifacts stay and `error.json` names the stage.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let hash = config.hash()?;
    let dir = config.output_dir.join(&hash[..12]);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut art = Artifacts {
        root: dir.clone(),
        files: Vec::new(),
    };
    art.write(&dir.join("config.toml"), &format!("# config_hash = \"{hash}\"\n{}", config.to_toml()?))?;

    let mut runs = Vec::new();
    for &seed in &config.seeds {
        let mut run = SeedRun {
            config,
            seed,
            hash: &hash,
            dir: Some(dir.join(format!("seed_{seed}"))),
            stage: String::new(),
        };
        match run.run(&mut art) {
            Ok(r) => runs.extend(r),
            Err(e) => {
                let manifest = serde_json::json!({
                    "config_hash": hash,
                    "seed": seed,
                    "stage": run.stage,
                    "error": e.to_string(),
                    "exit_code": e.exit_code(),
                });
                art.write(&dir.join("error.json"), &serde_json::to_string_pretty(&manifest)?)?;
                fs::write(dir.join("manifest.json"), art.manifest(&hash)?).map_err(|e| Error::io(&dir, e))?;
                return Err(e);
            }
        }
    }

    let report = build_report(&runs, &hash)?;
    art.write(&dir.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
    art.write(&dir.join("report.csv"), &report.to_csv())?;
    let manifest_path = dir.join("manifest.json");
    fs::write(&manifest_path, art.manifest(&hash)?).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(PipelineOutput {
        dir,
        config_hash: hash,
        report,
    })
}
