use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// How many singular triplets to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rank {
    Full,
    Top(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDecomposition {
    /// rows × k, orthonormal columns.
    pub left: Array2<f64>,
    /// Descending, nonnegative.
    pub singular_values: Array1<f64>,
    /// cols × k, orthonormal columns.
    pub right: Array2<f64>,
}

impl SpectralDecomposition {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `L · diag(σ) · Rᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.left * &self.singular_values.view().insert_axis(Axis(0));
        scaled.dot(&self.right.t())
    }
}

const MAX_SWEEPS: usize = 80;

/// One-sided Jacobi on the columns of a tall matrix. Returns the rotated
/// columns (`Z·V`, mutually orthogonal) and the accumulated rotation `V`.
fn jacobi_tall(z: ArrayView2<f64>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (n, d) = z.dim();
    let mut a: Vec<Vec<f64>> = (0..d).map(|j| z.column(j).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = f64::EPSILON * n as f64;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..d {
            for q in p + 1..d {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for (x, y) in a[p].iter().zip(&a[q]) {
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                rotate(&mut a, p, q, c, sn);
                rotate(&mut v, p, q, c, sn);
            }
        }
        if !rotated {
            break;
        }
    }
    (a, v)
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills columns whose singular value is zero with unit vectors orthogonal to
/// everything already present.
fn complete_basis(cols: &mut [Vec<f64>], filled: &[bool]) {
    let n = cols.first().map_or(0, |c| c.len());
    let mut basis: Vec<Vec<f64>> = cols.iter().zip(filled).filter(|(_, &f)| f).map(|(c, _)| c.clone()).collect();
    let mut candidate = 0;
    for (col, _) in cols.iter_mut().zip(filled).filter(|(_, &f)| !f) {
        while candidate < n {
            let mut e = vec![0.0; n];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for b in &basis {
                    let dot: f64 = e.iter().zip(b).map(|(x, y)| x * y).sum();
                    e.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
                }
            }
            let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.5 {
                e.iter_mut().for_each(|x| *x /= norm);
                basis.push(e.clone());
                *col = e;
                break;
            }
        }
    }
}

fn svd_tall(z: ArrayView2<f64>) -> SpectralDecomposition {
    let (n, d) = z.dim();
    let (a, v) = jacobi_tall(z);
    let sigma: Vec<f64> = a.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));

    let cutoff = sigma.iter().cloned().fold(0.0, f64::max) * f64::EPSILON * n.max(d) as f64;
    let mut left_cols = Vec::with_capacity(d);
    let mut filled = Vec::with_capacity(d);
    let mut values = Vec::with_capacity(d);
    for &j in &order {
        let sj = sigma[j];
        if sj > cutoff && sj > 0.0 {
            left_cols.push(a[j].iter().map(|x| x / sj).collect::<Vec<_>>());
            filled.push(true);
            values.push(sj);
        } else {
            left_cols.push(vec![0.0; n]);
            filled.push(false);
            values.push(0.0);
        }
    }
    complete_basis(&mut left_cols, &filled);

    let mut left = Array2::zeros((n, d));
    let mut right = Array2::zeros((d, d));
    for (k, &j) in order.iter().enumerate() {
        let flip = left_cols[k].iter().find(|x| x.abs() > 1e-12).is_some_and(|&x| x < 0.0);
        let sign = if flip { -1.0 } else { 1.0 };
        for r in 0..n {
            left[[r, k]] = sign * left_cols[k][r];
        }
        for r in 0..d {
            right[[r, k]] = sign * v[j][r];
        }
    }
    SpectralDecomposition {
        left,
        singular_values: Array1::from(values),
        right,
    }
}

/// Thin SVD `Z = L·diag(σ)·Rᵀ`, truncated to `rank`. Singular vectors are
/// signed so the first nonzero entry of each left vector is positive.
pub fn svd(z: ArrayView2<f64>, rank: Rank) -> Result<SpectralDecomposition> {
    let (n, d) = z.dim();
    let full = n.min(d);
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("svd input contains non-finite entries"));
    }
    let k = match rank {
        Rank::Full => full,
        Rank::Top(k) if k >= 1 && k <= full => k,
        Rank::Top(k) => {
            return Err(Error::invalid(format!("rank {k} outside 1..={full} for a {n}x{d} matrix")));
        }
    };
    if full == 0 {
        return Ok(SpectralDecomposition {
            left: Array2::zeros((n, 0)),
            singular_values: Array1::zeros(0),
            right: Array2::zeros((d, 0)),
        });
    }
    let mut dec = if n >= d {
        svd_tall(z)
    } else {
        let t = svd_tall(z.t());
        let mut dec = SpectralDecomposition {
            left: t.right,
            singular_values: t.singular_values,
            right: t.left,
        };
        fix_signs(&mut dec);
        dec
    };
    if k < full {
        dec.left = dec.left.slice(s![.., ..k]).to_owned();
        dec.right = dec.right.slice(s![.., ..k]).to_owned();
        dec.singular_values = dec.singular_values.slice(s![..k]).to_owned();
    }
    Ok(dec)
}

fn fix_signs(dec: &mut SpectralDecomposition) {
    for k in 0..dec.rank() {
        let flip = dec.left.column(k).iter().find(|x| x.abs() > 1e-12).is_some_and(|&x| x < 0.0);
        if flip {
            dec.left.column_mut(k).mapv_inplace(|x| -x);
            dec.right.column_mut(k).mapv_inplace(|x| -x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn orthonormal_columns(m: &Array2<f64>) -> bool {
        let g = m.t().dot(m);
        g.indexed_iter().all(|((i, j), &x)| (x - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8)
    }

    #[test]
    fn diagonal_sorted() {
        let z = array![[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]];
        let d = svd(z.view(), Rank::Full).unwrap();
        assert_eq!(d.singular_values.to_vec(), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn zero_matrix_has_orthonormal_factors() {
        let z = Array2::<f64>::zeros((4, 3));
        let d = svd(z.view(), Rank::Full).unwrap();
        assert!(d.singular_values.iter().all(|&x| x == 0.0));
        assert!(orthonormal_columns(&d.left));
        assert!(orthonormal_columns(&d.right));
    }

    #[test]
    fn wide_and_rank_deficient() {
        let z = array![[1.0, 2.0, 3.0, 4.0], [2.0, 4.0, 6.0, 8.0]];
        let d = svd(z.view(), Rank::Full).unwrap();
        assert_eq!(d.rank(), 2);
        assert!(d.singular_values[1].abs() < 1e-12);
        assert!(orthonormal_columns(&d.left));
        assert!(orthonormal_columns(&d.right));
        let err = (&d.reconstruct() - &z).mapv(|x| x * x).sum().sqrt();
        assert!(err < 1e-12);
        for k in 0..d.rank() {
            let first = d.left.column(k).iter().copied().find(|x| x.abs() > 1e-12).unwrap();
            assert!(first > 0.0);
        }
    }

    #[test]
    fn truncation_and_bad_rank() {
        let z = array![[3.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        let d = svd(z.view(), Rank::Top(1)).unwrap();
        assert_eq!(d.left.dim(), (3, 1));
        assert_eq!(d.right.dim(), (2, 1));
        assert!(svd(z.view(), Rank::Top(3)).is_err());
        assert!(svd(z.view(), Rank::Top(0)).is_err());
        let bad = array![[f64::NAN]];
        assert!(svd(bad.view(), Rank::Full).is_err());
    }
}
