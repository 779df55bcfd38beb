use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeded_rng;

/// Matrix norm applied to the removed rank-1 component `Z·V′·V′ᵀ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionNorm {
    /// Sum of absolute entries.
    #[default]
    L1,
    Frobenius,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DispersionState {
    /// Random probe, length d.
    pub v: Array1<f64>,
    /// `ZᵀZ·v`.
    pub v_prime: Array1<f64>,
    /// `Z − Z·V′·V′ᵀ / ‖V′‖²`.
    pub approx: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct DispersionOutput {
    pub loss: f64,
    pub grad: Array2<f64>,
    pub state: DispersionState,
}

const MAX_PROBES: usize = 8;

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `L_D = −‖Z·V′·V′ᵀ‖ / ‖V′‖²` for a given probe `v`, with its gradient
/// with respect to `Z` (the probe dependence of `V′` on `Z` included).
pub fn dispersion_with_probe(z: ArrayView2<f64>, v: ArrayView1<f64>, norm: DispersionNorm) -> Result<DispersionOutput> {
    if v.len() != z.ncols() {
        return Err(Error::Dimension(format!("probe has {} entries, Z has {} columns", v.len(), z.ncols())));
    }
    let t = z.dot(&v);
    let w = z.t().dot(&t);
    let s = w.dot(&w);
    if !(s > f64::MIN_POSITIVE) || !s.is_finite() {
        return Err(Error::numerical("Z annihilates the dispersion probe"));
    }
    let y = z.dot(&w);

    // L(Z, w) with w = ZᵀZv; direct term through y = Zw plus the chain
    // through w: dw = dZᵀ·t + Zᵀ·dZ·v.
    let (loss, direct_y, g_w) = match norm {
        DispersionNorm::L1 => {
            let a: f64 = y.iter().map(|x| x.abs()).sum();
            let b: f64 = w.iter().map(|x| x.abs()).sum();
            let sy = y.mapv(sign);
            let mut g_w = z.t().dot(&sy) * (-b / s);
            g_w.scaled_add(-a / s, &w.mapv(sign));
            g_w.scaled_add(2.0 * a * b / (s * s), &w);
            (-a * b / s, sy * (-b / s), g_w)
        }
        DispersionNorm::Frobenius => {
            let ny = y.dot(&y).sqrt();
            let nw = s.sqrt();
            let dy = if ny > 0.0 { &y / (-ny * nw) } else { Array1::zeros(y.len()) };
            let mut g_w = z.t().dot(&dy);
            g_w.scaled_add(ny / (nw * s), &w);
            (-ny / nw, dy, g_w)
        }
    };
    let outer = |a: &Array1<f64>, b: ArrayView1<f64>| a.view().insert_axis(ndarray::Axis(1)).dot(&b.insert_axis(ndarray::Axis(0)));
    let mut grad = outer(&direct_y, w.view());
    grad += &outer(&t, g_w.view());
    grad += &outer(&z.dot(&g_w), v);

    let approx = &z - &(outer(&y, w.view()) / s);
    Ok(DispersionOutput {
        loss,
        grad,
        state: DispersionState {
            v: v.to_owned(),
            v_prime: w,
            approx,
        },
    })
}

/// Dispersion loss with a standard-normal probe drawn from `seed`; redraws up
/// to 8 times if `Z` annihilates the probe.
pub fn dispersion_loss(z: ArrayView2<f64>, seed: u64, norm: DispersionNorm) -> Result<DispersionOutput> {
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("dispersion input contains non-finite entries"));
    }
    let mut rng = seeded_rng(seed, 0xd15);
    for _ in 0..MAX_PROBES {
        let v: Array1<f64> = (0..z.ncols()).map(|_| StandardNormal.sample(&mut rng)).collect();
        match dispersion_with_probe(z, v.view(), norm) {
            Err(Error::Numerical(_)) => continue,
            other => return other,
        }
    }
    Err(Error::numerical(format!(
        "dispersion probe annihilated {MAX_PROBES} times; Z is (numerically) zero"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn approx_annihilates_probe_direction() {
        let z = array![[1.0, 2.0, 0.5], [0.0, -1.0, 3.0], [2.0, 0.0, 1.0], [1.0, 1.0, 1.0]];
        let out = dispersion_loss(z.view(), 4, DispersionNorm::L1).unwrap();
        let r = out.state.approx.dot(&out.state.v_prime);
        assert!(r.iter().all(|x| x.abs() < 1e-8));
    }

    #[test]
    fn aligned_probe_removes_that_component() {
        // Orthogonal rows; v along the second right singular vector.
        let z = array![[3.0, 0.0], [0.0, 2.0]];
        let v = array![0.0, 1.0];
        let out = dispersion_with_probe(z.view(), v.view(), DispersionNorm::L1).unwrap();
        let residual = out.state.approx.dot(&v);
        assert!(residual.iter().all(|x| x.abs() < 1e-12));
        // Removed component is [[0,0],[0,2]]: L1 norm 2.
        assert!((out.loss + 2.0).abs() < 1e-12);
    }

    #[test]
    fn padded_rank_one_by_hand() {
        // Z = [[a, 0], [0, 0]] with probe (1, 1): V′ = (a², 0), Z·V′·V′ᵀ/‖V′‖² = Z.
        let z = array![[1.5, 0.0], [0.0, 0.0]];
        let v = array![1.0, 1.0];
        for norm in [DispersionNorm::L1, DispersionNorm::Frobenius] {
            let out = dispersion_with_probe(z.view(), v.view(), norm).unwrap();
            assert!((out.loss + 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_matrix_errors_after_retries() {
        let z = Array2::<f64>::zeros((3, 2));
        assert!(matches!(dispersion_loss(z.view(), 0, DispersionNorm::L1), Err(Error::Numerical(_))));
    }

    #[test]
    fn probe_is_seeded() {
        let z = array![[1.0, 2.0], [3.0, 4.0], [5.0, 7.0]];
        let a = dispersion_loss(z.view(), 3, DispersionNorm::L1).unwrap();
        let b = dispersion_loss(z.view(), 3, DispersionNorm::L1).unwrap();
        assert_eq!(a.state.v, b.state.v);
        assert_eq!(a.loss, b.loss);
    }
}
