use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::kernels::EmbeddingMatrix;

/// Linear adaptation head `z = θ u` on top of frozen embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    theta: Array2<f64>,
}

impl LinearHead {
    pub fn identity(d: usize) -> Self {
        LinearHead { theta: Array2::eye(d) }
    }

    pub fn from_matrix(theta: Array2<f64>) -> Result<Self> {
        if theta.nrows() != theta.ncols() {
            return Err(Error::DimensionMismatch { expected: theta.nrows(), found: theta.ncols() });
        }
        if !theta.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("head parameters"));
        }
        Ok(LinearHead { theta })
    }

    pub fn dim(&self) -> usize {
        self.theta.nrows()
    }

    pub fn theta(&self) -> &Array2<f64> {
        &self.theta
    }

    pub(crate) fn theta_mut(&mut self) -> &mut Array2<f64> {
        &mut self.theta
    }
}

/// Output of [`transform`] together with what the backward pass needs.
pub(crate) struct Forward {
    pub z: EmbeddingMatrix,
    /// Row norms of θu before normalization; `None` when not normalizing.
    pub norms: Option<Array1<f64>>,
}

pub(crate) fn forward(head: &LinearHead, u: &EmbeddingMatrix, normalize: bool) -> Result<Forward> {
    if u.dim() != head.dim() {
        return Err(Error::DimensionMismatch { expected: head.dim(), found: u.dim() });
    }
    let mut v = u.view().dot(&head.theta.t());
    let norms = if normalize {
        let norms = v.map_axis(Axis(1), |r| r.dot(&r).sqrt());
        for (mut row, &n) in v.axis_iter_mut(Axis(0)).zip(norms.iter()) {
            if n > 0.0 {
                row /= n;
            }
        }
        Some(norms)
    } else {
        None
    };
    Ok(Forward { z: EmbeddingMatrix::new(v)?, norms })
}

/// Applies the head to every row of `u`, then L2-normalizes rows if asked.
/// Zero rows stay zero.
pub fn transform(head: &LinearHead, u: &EmbeddingMatrix, normalize: bool) -> Result<EmbeddingMatrix> {
    Ok(forward(head, u, normalize)?.z)
}

/// Pulls `∂L/∂Z` back through normalization and the head to `∂L/∂θ`.
pub(crate) fn backward(fwd: &Forward, u: &EmbeddingMatrix, grad_z: Array2<f64>) -> Array2<f64> {
    let grad_v = match &fwd.norms {
        None => grad_z,
        Some(norms) => {
            let z = fwd.z.as_array();
            let mut gv = grad_z;
            for (i, mut row) in gv.axis_iter_mut(Axis(0)).enumerate() {
                let n = norms[i];
                if n > 0.0 {
                    let zi = z.row(i);
                    let proj = zi.dot(&row);
                    row.scaled_add(-proj, &zi);
                    row /= n;
                } else {
                    row.fill(0.0);
                }
            }
            gv
        }
    };
    grad_v.t().dot(&u.view())
}
