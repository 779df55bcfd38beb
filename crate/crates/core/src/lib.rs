//! Graph contrastive recommenders under spectral attack and defense.
//!
//! The crate trains LightGCN-style embeddings with a joint BPR + InfoNCE
//! objective ([`trainer`]), analyses their singular spectra ([`spectral`]),
//! builds targeted-promotion fake profiles ([`attack`]), detects and
//! suppresses promoted items through rank-k reconstruction errors
//! ([`defense`]) and scores everything with Recall@K / HitRatio@K ([`eval`]).
//! [`pipeline`] wires the stages together for the `specshield` binary.

// `!(x > 0.0)` style checks reject NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod defense;
pub mod error;
pub mod eval;
pub mod graph;
pub mod pipeline;
pub mod spectral;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for `seed`; `stream` separates independent uses of
/// one seed (sampling, augmentation, probes, ...).
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
