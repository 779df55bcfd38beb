//! Loss functions with analytic gradients taken with respect to the
//! propagated embedding matrix (users stacked above items).

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BprTriple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// BPR: `-mean log σ(z_u·z_i − z_u·z_j)`. Item indices are catalog indices;
/// their rows sit at `num_users + item`.
pub fn bpr_loss(prop: ArrayView2<f64>, num_users: usize, triples: &[BprTriple]) -> Result<(f64, Array2<f64>)> {
    if triples.is_empty() {
        return Err(Error::invalid("BPR loss needs at least one triple"));
    }
    let mut grad = Array2::zeros(prop.raw_dim());
    let scale = 1.0 / triples.len() as f64;
    let mut loss = 0.0;
    for t in triples {
        let (ri, rj) = (num_users + t.pos, num_users + t.neg);
        let zu = prop.row(t.user);
        let zi = prop.row(ri);
        let zj = prop.row(rj);
        let x = zu.dot(&zi) - zu.dot(&zj);
        loss += softplus(-x);
        // d/dx softplus(-x) = -σ(-x)
        let c = -sigmoid(-x) * scale;
        let diff = &zi - &zj;
        let zu = zu.to_owned();
        grad.row_mut(t.user).scaled_add(c, &diff);
        grad.row_mut(ri).scaled_add(c, &zu);
        grad.row_mut(rj).scaled_add(-c, &zu);
    }
    Ok((loss * scale, grad))
}

/// `l2/2 · Σ‖row‖² / batch` over the base rows touched by the batch.
pub fn l2_penalty(base: ArrayView2<f64>, num_users: usize, triples: &[BprTriple], l2: f64) -> (f64, Array2<f64>) {
    let mut grad = Array2::zeros(base.raw_dim());
    if l2 == 0.0 || triples.is_empty() {
        return (0.0, grad);
    }
    let scale = l2 / triples.len() as f64;
    let mut loss = 0.0;
    for t in triples {
        for r in [t.user, num_users + t.pos, num_users + t.neg] {
            let row = base.row(r);
            loss += 0.5 * scale * row.dot(&row);
            grad.row_mut(r).scaled_add(scale, &row);
        }
    }
    (loss, grad)
}

#[derive(Clone, Debug)]
pub struct InfoNceOutput {
    pub loss: f64,
    /// Gradient with respect to the first view (full matrix, zero outside the subset).
    pub grad_first: Array2<f64>,
    pub grad_second: Array2<f64>,
    /// Row-normalised subset of the first view, kept for inspection.
    pub normalized_first: Array2<f64>,
    pub normalized_second: Array2<f64>,
}

fn normalize_rows(view: ArrayView2<f64>, nodes: &[usize]) -> Result<(Array2<f64>, Array1<f64>)> {
    let mut out = view.select(Axis(0), nodes);
    let mut norms = Array1::zeros(nodes.len());
    for (k, mut row) in out.rows_mut().into_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::ZeroNorm { node: nodes[k] });
        }
        row /= n;
        norms[k] = n;
    }
    Ok((out, norms))
}

/// Projects `g` (gradient w.r.t. normalised rows) back through `z/‖z‖`.
fn through_normalization(g: &mut Array2<f64>, normalized: &Array2<f64>, norms: &Array1<f64>) {
    for ((mut gr, zr), &n) in g.rows_mut().into_iter().zip(normalized.rows()).zip(norms) {
        let radial = gr.dot(&zr);
        gr.scaled_add(-radial, &zr);
        gr /= n;
    }
}

/// InfoNCE summed over `nodes`, negatives drawn from the same subset:
///
/// `Σ_p [ −s_pp + log Σ_n exp(s_pn) ]`, `s_pn = z̄′_p·z̄″_n / τ`.
pub fn info_nce_loss(first: ArrayView2<f64>, second: ArrayView2<f64>, temperature: f64, nodes: &[usize]) -> Result<InfoNceOutput> {
    if first.raw_dim() != second.raw_dim() {
        return Err(Error::Dimension("contrastive views differ in shape".into()));
    }
    if !(temperature > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    let (a, a_norm) = normalize_rows(first, nodes)?;
    let (b, b_norm) = normalize_rows(second, nodes)?;
    let n = nodes.len();
    let mut logits = a.dot(&b.t());
    logits /= temperature;
    let mut loss = 0.0;
    // logits become softmax(P) − I in place
    for (p, mut row) in logits.rows_mut().into_iter().enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let sum: f64 = row.iter().map(|&x| (x - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[p];
        row.mapv_inplace(|x| (x - lse).exp());
        row[p] -= 1.0;
    }
    let mut ga = logits.dot(&b);
    ga /= temperature;
    let mut gb = logits.t().dot(&a);
    gb /= temperature;
    through_normalization(&mut ga, &a, &a_norm);
    through_normalization(&mut gb, &b, &b_norm);

    let mut grad_first = Array2::zeros(first.raw_dim());
    let mut grad_second = Array2::zeros(second.raw_dim());
    for k in 0..n {
        grad_first.row_mut(nodes[k]).scaled_add(1.0, &ga.row(k));
        grad_second.row_mut(nodes[k]).scaled_add(1.0, &gb.row(k));
    }
    Ok(InfoNceOutput {
        loss,
        grad_first,
        grad_second,
        normalized_first: a,
        normalized_second: b,
    })
}
