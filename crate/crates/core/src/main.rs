use std::collections::HashSet;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use specshield::attack::ClearConfig;
use specshield::defense::{sim_train, write_detection, DefenseConfig, DefenseMode};
use specshield::eval::evaluate;
use specshield::graph::{
    load_interactions, normalized_adjacency, read_snapshot, select_targets, split, write_snapshot, InteractionGraph, SplitMode, SplitRatios, TargetSet,
};
use specshield::pipeline::{build_attack, run_pipeline, AttackMethod, AttackSpec, ExperimentConfig};
use specshield::spectral::{reconstruction_csv, reconstruction_errors, spectrum_report};
use specshield::synth::{generate_synthetic, SyntheticSpec};
use specshield::trainer::{train, EmbeddingModel, TrainConfig};
use specshield::{Error, Result};

#[derive(Parser)]
#[command(name = "specshield", version, about = "Train, attack, defend and score graph contrastive recommenders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a `user item` interaction file, split it and write a snapshot.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "per-user")]
        split_mode: SplitArg,
    },
    /// Generate a synthetic power-law graph, split it and write a snapshot.
    Synth {
        #[arg(long, default_value_t = 500)]
        users: usize,
        #[arg(long, default_value_t = 800)]
        items: usize,
        #[arg(long, default_value_t = 1.0)]
        exponent: f64,
        #[arg(long, default_value_t = 0.04)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a snapshot; writes checkpoint.json and train_log.csv.
    Train {
        #[arg(long)]
        graph: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Singular spectrum of the propagated item embeddings, optionally with
    /// rank-k reconstruction errors.
    Spectrum {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build fake profiles and write them with the poisoned snapshot.
    Attack {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, default_value_t = 0.01)]
        attack_size: f64,
        /// File with one target item id per line; drawn from cold items when absent.
        #[arg(long)]
        targets: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        num_targets: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train with detection and suppression; writes the checkpoint and the
    /// last detection.
    Defend {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.1)]
        lambda_mit: f64,
        #[arg(long, default_value_t = 32)]
        rank: usize,
        #[arg(long, default_value_t = 50)]
        top_m: usize,
        #[arg(long, conflicts_with = "ablate_detection")]
        ablate_suppression: bool,
        #[arg(long)]
        ablate_detection: bool,
        /// Random flagged-set size for the detection ablation.
        #[arg(long, default_value_t = 500)]
        random_flagged: usize,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print Recall@K and HitRatio@K of a checkpoint as JSON.
    Evaluate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long, default_value_t = 50)]
        k: usize,
        /// Item ids removed from ranking, one per line.
        #[arg(long)]
        banned: Option<PathBuf>,
    },
    /// Run an experiment config end to end.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the built-in synthetic benchmark config.
        #[arg(long, conflicts_with = "config")]
        benchmark: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the experiment config schema (defaults, benchmark, exit codes) as JSON.
    Schema,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    PerUser,
    Global,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Random,
    Clear,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML training config; the flags below override it.
    #[arg(long)]
    train_config: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    gcl_weight: Option<f64>,
    #[arg(long)]
    train_seed: Option<u64>,
}

impl TrainArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.train_config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
            }
            None => TrainConfig::default(),
        };
        c.dim = self.dim.unwrap_or(c.dim);
        c.epochs = self.epochs.unwrap_or(c.epochs);
        c.learning_rate = self.lr.unwrap_or(c.learning_rate);
        c.gcl_weight = self.gcl_weight.unwrap_or(c.gcl_weight);
        c.seed = self.train_seed.unwrap_or(c.seed);
        c.validate()?;
        Ok(c)
    }
}

/// Prints a line, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = writeln!(io::stdout().lock(), "{text}");
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Maps a file of item ids (one per line) to indices.
fn read_items(graph: &InteractionGraph, path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let id = line.trim();
        if id.is_empty() || id.starts_with('#') {
            continue;
        }
        let idx = graph.item_ids().iter().position(|x| x == id).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg: format!("unknown item id {id:?}"),
        })?;
        out.push(idx);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn write_items(graph: &InteractionGraph, items: &[usize], path: &Path) -> Result<()> {
    let text: String = items.iter().map(|&i| format!("{}\n", graph.item_ids()[i])).collect();
    write(path, &text)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { input, out, seed, split_mode } => {
            let report = load_interactions(&input)?;
            info!("{} duplicate interactions dropped", report.duplicates);
            let mode = match split_mode {
                SplitArg::PerUser => SplitMode::PerUser,
                SplitArg::Global => SplitMode::Global,
            };
            let g = split(&report.graph, SplitRatios::default(), mode, seed)?;
            write_snapshot(&g, &out, None)
        }
        Command::Synth {
            users,
            items,
            exponent,
            density,
            seed,
            out,
        } => {
            let spec = SyntheticSpec {
                users,
                items,
                exponent,
                density,
                seed,
                ..SyntheticSpec::default()
            };
            let g = split(&generate_synthetic(&spec)?, SplitRatios::default(), SplitMode::default(), seed)?;
            write_snapshot(&g, &out, None)
        }
        Command::Train { graph, train: args, out } => {
            let g = read_snapshot(&graph)?;
            let config = args.resolve()?;
            let (model, log) = train(&g, &config)?;
            mkdir(&out)?;
            model.save(&out.join("checkpoint.json"), None)?;
            log.write_csv(&out.join("train_log.csv"))
        }
        Command::Spectrum { graph, checkpoint, rank, out } => {
            let g = read_snapshot(&graph)?;
            let model = EmbeddingModel::load(&checkpoint)?;
            let prop = model.propagate(&normalized_adjacency(&g)?)?;
            let items = prop.slice(ndarray::s![g.num_users().., ..]);
            mkdir(&out)?;
            let report = spectrum_report(items)?;
            write(&out.join("spectrum.csv"), &report.to_csv())?;
            emit(
                &serde_json::json!({
                    "top_share": report.top_share,
                    "top_to_tenth": report.top_to_tenth,
                    "effective_rank": report.effective_rank,
                })
                .to_string(),
            );
            if let Some(k) = rank {
                let eps = reconstruction_errors(items, k)?;
                write(&out.join("epsilon.csv"), &reconstruction_csv(&eps, g.item_ids()))?;
            }
            Ok(())
        }
        Command::Attack {
            graph,
            method,
            attack_size,
            targets,
            num_targets,
            alpha,
            seed,
            train: args,
            out,
        } => {
            let g = read_snapshot(&graph)?;
            let targets = match targets {
                Some(p) => TargetSet {
                    items: read_items(&g, &p)?,
                    seed,
                },
                None => select_targets(&g, num_targets, seed)?,
            };
            let spec = AttackSpec {
                attack_size,
                clear: ClearConfig {
                    alpha,
                    seed,
                    ..ClearConfig::default()
                },
                ..AttackSpec::default()
            };
            let method = match method {
                MethodArg::Random => AttackMethod::Random,
                MethodArg::Clear => AttackMethod::Clear,
            };
            let profiles = build_attack(method, &g, &targets, &spec, &args.resolve()?, seed)?.expect("an attack method always yields profiles");
            profiles.write(&out, g.item_ids(), "")?;
            write_items(&g, &targets.items, &out.join("targets.txt"))?;
            write_snapshot(&g.with_injected_users(&profiles.profiles)?, &out.join("poisoned"), None)
        }
        Command::Defend {
            graph,
            gamma,
            lambda_mit,
            rank,
            top_m,
            ablate_suppression,
            ablate_detection,
            random_flagged,
            train: args,
            out,
        } => {
            let g = read_snapshot(&graph)?;
            let mode = if ablate_suppression {
                DefenseMode::WithoutSuppression
            } else if ablate_detection {
                DefenseMode::WithoutDetection
            } else {
                DefenseMode::Full
            };
            let config = DefenseConfig {
                rank,
                gamma,
                top_m,
                lambda_mit,
                mode,
                random_flagged,
                ..DefenseConfig::default()
            };
            let outcome = sim_train(&g, &args.resolve()?, &config)?;
            mkdir(&out)?;
            outcome.model.save(&out.join("checkpoint.json"), None)?;
            outcome.log.write_csv(&out.join("train_log.csv"))?;
            if let Some(det) = outcome.detections.last() {
                write_detection(det, g.item_ids(), &out.join("detection.json"))?;
            }
            let mut banned: Vec<usize> = outcome.banned.into_iter().collect();
            banned.sort_unstable();
            write_items(&g, &banned, &out.join("banned.txt"))
        }
        Command::Evaluate {
            graph,
            checkpoint,
            targets,
            k,
            banned,
        } => {
            let g = read_snapshot(&graph)?;
            let model = EmbeddingModel::load(&checkpoint)?;
            let targets = TargetSet {
                items: read_items(&g, &targets)?,
                seed: model.config.seed,
            };
            let banned: Option<HashSet<usize>> = banned.map(|p| read_items(&g, &p)).transpose()?.map(|v| v.into_iter().collect());
            let prop = model.propagate(&normalized_adjacency(&g)?)?;
            let report = evaluate(prop.view(), &g, &targets, k, banned.as_ref(), model.config.seed, "")?;
            emit(&serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Pipeline { config, benchmark, out } => {
            let mut config = match (config, benchmark) {
                (Some(p), _) => ExperimentConfig::load(&p)?,
                (None, true) => ExperimentConfig::benchmark(),
                (None, false) => return Err(Error::Config("pass --config <file> or --benchmark".into())),
            };
            if let Some(o) = out {
                config.output_dir = o;
            }
            let result = run_pipeline(&config)?;
            emit(result.report.to_csv().trim_end());
            eprintln!("artifacts in {}", result.dir.display());
            Ok(())
        }
        Command::Schema => {
            let schema = serde_json::json!({
                "report_schema_version": specshield::eval::REPORT_SCHEMA_VERSION,
                "experiment_config_defaults": ExperimentConfig::default(),
                "benchmark_config": ExperimentConfig::benchmark(),
                "exit_codes": {"0": "success", "2": "config or input error", "3": "numerical failure", "4": "budget violation"},
            });
            emit(&serde_json::to_string_pretty(&schema)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
