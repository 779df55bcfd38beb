//! Browser bindings. Every export returns a JSON string; failures come back
//! as `{"error": "..."}` so the page has one code path.

use ndarray::s;
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;

use specshield::attack::{random_attack, AttackBudget};
use specshield::defense::{detect_anomalies, threshold};
use specshield::graph::{normalized_adjacency, select_targets, split, InteractionGraph, SplitMode, SplitRatios};
use specshield::spectral::{gcl_upper_bound, spectrum_report};
use specshield::synth::{generate_synthetic, SyntheticSpec};
use specshield::trainer::{train, TrainConfig};
use specshield::Result;

fn respond<T: Serialize>(r: Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| json!({ "error": e.to_string() }).to_string()),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn small_graph(seed: u64) -> Result<InteractionGraph> {
    let spec = SyntheticSpec {
        users: 120,
        items: 200,
        density: 0.06,
        seed,
        ..SyntheticSpec::default()
    };
    split(&generate_synthetic(&spec)?, SplitRatios::default(), SplitMode::PerUser, seed)
}

fn small_training(gcl_weight: f64, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        dim: 16,
        epochs,
        learning_rate: 0.01,
        l2: 1e-2,
        batch_size: 256,
        gcl_weight,
        contrast_nodes: Some(64),
        seed,
        ..TrainConfig::default()
    }
}

fn item_spectrum(graph: &InteractionGraph, config: &TrainConfig) -> Result<specshield::spectral::SpectrumReport> {
    let (model, _) = train(graph, config)?;
    let prop = model.propagate(&normalized_adjacency(graph)?)?;
    spectrum_report(prop.slice(s![graph.num_users().., ..]))
}

/// Item-embedding spectra of a small synthetic recommender trained with the
/// given contrastive weight and without it.
#[wasm_bindgen]
pub fn explore_spectrum(gcl_weight: f64, epochs: usize, seed: u64) -> String {
    respond((|| {
        let graph = small_graph(seed)?;
        let weighted = item_spectrum(&graph, &small_training(gcl_weight, epochs, seed))?;
        let plain = item_spectrum(&graph, &small_training(0.0, epochs, seed))?;
        Ok(json!({ "weighted": weighted, "plain": plain }))
    })())
}

/// Trains on a graph poisoned with random fake profiles and returns the
/// per-item reconstruction errors, the promoted items and the flagged set.
#[wasm_bindgen]
pub fn detect_shilling(attack_size: f64, rank: usize, gamma: f64, seed: u64) -> String {
    respond((|| {
        let graph = small_graph(seed)?;
        let targets = select_targets(&graph, 3, seed)?;
        let budget = AttackBudget::new(&graph, attack_size, &targets)?;
        let attack = random_attack(&graph, &targets, &budget, seed)?;
        let poisoned = graph.with_injected_users(&attack.profiles)?;
        let (model, _) = train(&poisoned, &small_training(0.1, 20, seed))?;
        let prop = model.propagate(&normalized_adjacency(&poisoned)?)?;
        let det = detect_anomalies(prop.slice(s![poisoned.num_users().., ..]), rank, gamma)?;
        Ok(json!({
            "epsilon": det.epsilon,
            "mu": det.mu,
            "s": det.s,
            "flagged": det.flagged,
            "targets": targets.items,
            "fake_users": attack.profiles.len(),
        }))
    })())
}

/// Re-thresholds reconstruction errors at a new γ without retraining.
#[wasm_bindgen]
pub fn flag_items(epsilon: Vec<f64>, gamma: f64) -> String {
    respond(threshold(epsilon, gamma).map(|d| json!({ "mu": d.mu, "s": d.s, "flagged": d.flagged })))
}

/// Upper bound on the contrastive loss for two spectra that share singular
/// vectors, with `n` nodes.
#[wasm_bindgen]
pub fn contrastive_bound(first: Vec<f64>, second: Vec<f64>, n: usize) -> String {
    respond(gcl_upper_bound(&first, &second, n).map(|bound| {
        let products: Vec<f64> = first.iter().zip(&second).map(|(a, b)| a * b).collect();
        let top = products.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = products.iter().sum();
        json!({ "bound": bound, "top_product": top, "sum_product": sum, "log_term": n as f64 * (n as f64).ln() })
    }))
}
