//! Analytic gradients against central finite differences.

mod common;

use common::grad;
use specshield::spectral::DispersionNorm;

const TOL: f64 = 1e-4;
const INSTANCES: u64 = 25;

fn check(name: &str, f: impl Fn(u64) -> f64) {
    for seed in 0..INSTANCES {
        let e = f(seed);
        assert!(e < TOL, "{name} seed {seed}: relative error {e}");
    }
}

#[test]
fn bpr() {
    check("bpr", grad::bpr);
}

#[test]
fn info_nce_both_views() {
    check("info_nce", grad::info_nce);
}

#[test]
fn joint_bpr_plus_info_nce() {
    check("joint", grad::joint);
}

#[test]
fn bpr_through_propagation() {
    check("propagation", grad::through_propagation);
}

#[test]
fn dispersion_both_norms() {
    check("dispersion l1", |s| grad::dispersion(s, DispersionNorm::L1));
    check("dispersion frobenius", |s| grad::dispersion(s, DispersionNorm::Frobenius));
}

#[test]
fn rank_promotion() {
    check("rank", grad::rank);
}

#[test]
fn mitigation_fixed_pairs() {
    check("mitigation", grad::mitigation);
}

#[test]
fn attack_objective_sum() {
    check("attack", grad::attack);
}
