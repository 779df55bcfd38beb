//! Singular-value tools: SVD, spectrum summaries, the contrastive-loss upper
//! bound, the rank-1 dispersion loss and rank-k reconstruction errors.

mod dispersion;
mod svd;

use std::fmt::Write as _;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

pub use dispersion::{dispersion_loss, dispersion_with_probe, DispersionNorm, DispersionOutput, DispersionState};
pub use svd::{svd, Rank, SpectralDecomposition};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Descending.
    pub sigma: Vec<f64>,
    /// σ₁ / Σσ.
    pub top_share: f64,
    /// σ₁ / σ₁₀, when there are at least ten nonzero values.
    pub top_to_tenth: Option<f64>,
    /// exp of the entropy of σ / Σσ.
    pub effective_rank: f64,
}

/// Summary of a descending spectrum.
pub fn summarize_spectrum(sigma: &[f64]) -> Result<SpectrumReport> {
    let total: f64 = sigma.iter().sum();
    if !(total > 0.0) || sigma.iter().any(|&s| s < 0.0 || !s.is_finite()) {
        return Err(Error::numerical("spectrum summary needs a nonzero, nonnegative spectrum"));
    }
    let entropy: f64 = sigma
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|&s| {
            let p = s / total;
            -p * p.ln()
        })
        .sum();
    let top_to_tenth = sigma.get(9).filter(|&&s| s > 0.0).map(|&s| sigma[0] / s);
    Ok(SpectrumReport {
        sigma: sigma.to_vec(),
        top_share: sigma[0] / total,
        top_to_tenth,
        effective_rank: entropy.exp(),
    })
}

pub fn spectrum_report(z: ArrayView2<f64>) -> Result<SpectrumReport> {
    let dec = svd(z, Rank::Full)?;
    summarize_spectrum(dec.singular_values.as_slice().expect("contiguous"))
}

impl SpectrumReport {
    /// `rank,sigma` rows, 1-based rank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,sigma\n");
        for (r, s) in self.sigma.iter().enumerate() {
            let _ = writeln!(out, "{},{}", r + 1, s);
        }
        out
    }
}

/// `N·max_j σ′_jσ″_j − Σ_i σ′_iσ″_i + N·log N`.
pub fn gcl_upper_bound(first: &[f64], second: &[f64], n: usize) -> Result<f64> {
    if first.len() != second.len() {
        return Err(Error::Dimension(format!("spectra of different lengths: {} vs {}", first.len(), second.len())));
    }
    if n == 0 {
        return Err(Error::invalid("bound needs N >= 1"));
    }
    if first.iter().chain(second).any(|&s| s < 0.0) {
        return Err(Error::invalid("singular values must be nonnegative"));
    }
    let products: Vec<f64> = first.iter().zip(second).map(|(a, b)| a * b).collect();
    let max = products.iter().cloned().fold(0.0, f64::max);
    let n = n as f64;
    Ok(n * max - products.iter().sum::<f64>() + n * n.ln())
}

/// Distance of every row of `z_items` from the span of the top-`k` right
/// singular vectors.
pub fn reconstruction_errors(z_items: ArrayView2<f64>, k: usize) -> Result<Vec<f64>> {
    let full = z_items.nrows().min(z_items.ncols());
    if k == 0 || k >= full {
        return Err(Error::invalid(format!("reconstruction rank must lie in 1..{full}, got {k}")));
    }
    let dec = svd(z_items, Rank::Top(k))?;
    let coords = z_items.dot(&dec.right);
    let residual = &z_items - &coords.dot(&dec.right.t());
    Ok(residual.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect())
}

/// `item_id,epsilon` rows.
pub fn reconstruction_csv(errors: &[f64], item_ids: &[String]) -> String {
    let mut out = String::from("item_id,epsilon\n");
    for (id, e) in item_ids.iter().zip(errors) {
        let _ = writeln!(out, "{id},{e}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn rank_one_report() {
        let z = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let r = spectrum_report(z.view()).unwrap();
        assert!((r.top_share - 1.0).abs() < 1e-12);
        assert!((r.effective_rank - 1.0).abs() < 1e-12);
        assert_eq!(r.top_to_tenth, None);
    }

    #[test]
    fn orthogonal_report_has_full_effective_rank() {
        let z = Array2::<f64>::eye(12) * 2.0;
        let r = spectrum_report(z.view()).unwrap();
        assert!((r.effective_rank - 12.0).abs() < 1e-9);
        assert!((r.top_share - 1.0 / 12.0).abs() < 1e-12);
        assert!((r.top_to_tenth.unwrap() - 1.0).abs() < 1e-12);
        assert!(r.to_csv().starts_with("rank,sigma\n1,"));
    }

    #[test]
    fn bound_by_substitution() {
        let ones = vec![1.0; 5];
        let b = gcl_upper_bound(&ones, &ones, 7).unwrap();
        assert!((b - (7.0 - 5.0 + 7.0 * 7f64.ln())).abs() < 1e-12);
        assert_eq!(gcl_upper_bound(&[1.0], &[1.0], 1).unwrap(), 0.0);
        assert!(gcl_upper_bound(&[1.0], &[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn full_rank_reconstruction_rejected() {
        let z = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        assert!(reconstruction_errors(z.view(), 2).is_err());
        assert!(reconstruction_errors(z.view(), 0).is_err());
    }

    #[test]
    fn exact_rank_gives_zero_error() {
        // Rank 2 inside a 3-dim space.
        let z = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0], [2.0, -1.0, 0.0]];
        let e = reconstruction_errors(z.view(), 2).unwrap();
        assert!(e.iter().all(|&x| x < 1e-8));
    }

    #[test]
    fn planted_orthogonal_item_is_worst() {
        let z = array![[3.0, 1.0, 0.0], [2.5, 1.2, 0.0], [3.2, 0.8, 0.0], [2.9, 1.1, 0.0], [0.0, 0.0, 1.0],];
        let e = reconstruction_errors(z.view(), 1).unwrap();
        let worst = (0..5).max_by(|&a, &b| e[a].total_cmp(&e[b])).unwrap();
        assert_eq!(worst, 4);
    }

    #[test]
    fn csv_uses_given_ids() {
        let csv = reconstruction_csv(&[0.5, 1.0], &["a".into(), "b".into()]);
        assert_eq!(csv, "item_id,epsilon\na,0.5\nb,1\n");
    }
}
