//! Nearest-centroid classification with cosine similarity, its cross-entropy
//! loss and the gradient used by the baseline fine-tune.

use ndarray::{Array1, Array2, ArrayView1};

use super::head::{backward, forward, LinearHead};
use crate::error::{Error, Result};
use crate::kernels::{cosine, EmbeddingMatrix, LabelVector};

/// Class prototypes (class-mean rows), `n_classes × d`.
pub fn prototypes(z: &EmbeddingMatrix, labels: &LabelVector) -> Result<Array2<f64>> {
    if labels.len() != z.rows() {
        return Err(Error::DimensionMismatch { expected: z.rows(), found: labels.len() });
    }
    let counts = labels.class_counts();
    let mut protos = Array2::zeros((labels.n_classes(), z.dim()));
    for (i, &c) in labels.as_slice().iter().enumerate() {
        let mut row = protos.row_mut(c);
        row += &z.row(i);
    }
    for (c, &n) in counts.iter().enumerate() {
        let mut row = protos.row_mut(c);
        row /= n as f64;
    }
    Ok(protos)
}

fn similarities(z: &EmbeddingMatrix, protos: &Array2<f64>) -> Array2<f64> {
    Array2::from_shape_fn((z.rows(), protos.nrows()), |(i, c)| cosine(z.row(i), protos.row(c)))
}

fn check_classes(labels: &LabelVector) -> Result<()> {
    if labels.n_classes() < 2 {
        return Err(Error::invalid("nearest-centroid loss needs at least two classes"));
    }
    Ok(())
}

fn softmax_row(row: ArrayView1<'_, f64>) -> (Array1<f64>, f64) {
    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exp = row.mapv(|s| (s - max).exp());
    let total = exp.sum();
    (exp / total, max + total.ln())
}

/// Mean negative log-likelihood of the true class under a softmax over
/// cosine similarities to the class prototypes.
pub fn ncc_loss(z: &EmbeddingMatrix, labels: &LabelVector) -> Result<f64> {
    check_classes(labels)?;
    let protos = prototypes(z, labels)?;
    let sims = similarities(z, &protos);
    let mut total = 0.0;
    for (i, &y) in labels.as_slice().iter().enumerate() {
        let (_, lse) = softmax_row(sims.row(i));
        total += lse - sims[[i, y]];
    }
    Ok(total / z.rows() as f64)
}

/// ∂cos(a, b)/∂a.
fn cosine_grad_first(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Option<Array1<f64>> {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let cos = a.dot(&b) / (na * nb);
    Some(&b / (na * nb) - &(&a * (cos / (na * na))))
}

/// NCC loss of `transform(head, u)` and its gradient with respect to θ.
pub fn ncc_loss_and_gradient(
    head: &LinearHead,
    u: &EmbeddingMatrix,
    labels: &LabelVector,
    normalize: bool,
) -> Result<(f64, Array2<f64>)> {
    check_classes(labels)?;
    let fwd = forward(head, u, normalize)?;
    let z = &fwd.z;
    let protos = prototypes(z, labels)?;
    let sims = similarities(z, &protos);
    let m = z.rows();
    let n_classes = labels.n_classes();
    let counts = labels.class_counts();

    let mut loss = 0.0;
    let mut grad_z = Array2::<f64>::zeros(z.as_array().raw_dim());
    let mut grad_protos = Array2::<f64>::zeros(protos.raw_dim());
    for (i, &y) in labels.as_slice().iter().enumerate() {
        let (p, lse) = softmax_row(sims.row(i));
        loss += lse - sims[[i, y]];
        for c in 0..n_classes {
            let w = (p[c] - if c == y { 1.0 } else { 0.0 }) / m as f64;
            if w == 0.0 {
                continue;
            }
            if let Some(g) = cosine_grad_first(z.row(i), protos.row(c)) {
                grad_z.row_mut(i).scaled_add(w, &g);
            }
            if let Some(g) = cosine_grad_first(protos.row(c), z.row(i)) {
                grad_protos.row_mut(c).scaled_add(w, &g);
            }
        }
    }
    for (j, &c) in labels.as_slice().iter().enumerate() {
        grad_z.row_mut(j).scaled_add(1.0 / counts[c] as f64, &grad_protos.row(c));
    }
    Ok((loss / m as f64, backward(&fwd, u, grad_z)))
}

/// Assigns each query row to the support class with the most cosine-similar
/// prototype. Ties go to the lower class id.
pub fn ncc_predict(
    head: &LinearHead,
    support: &EmbeddingMatrix,
    support_labels: &LabelVector,
    query: &EmbeddingMatrix,
    normalize: bool,
) -> Result<Vec<usize>> {
    let zs = forward(head, support, normalize)?.z;
    let zq = forward(head, query, normalize)?.z;
    let protos = prototypes(&zs, support_labels)?;
    let sims = similarities(&zq, &protos);
    Ok(sims
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &s) in row.iter().enumerate() {
                if s > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}
