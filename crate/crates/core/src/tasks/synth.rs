use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::EmbeddingDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub n_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Norm of every class mean.
    pub separation: f64,
    /// Standard deviation of the isotropic noise.
    pub noise: f64,
}

/// `n` orthonormal directions in `R^d` (rows), from a Gram-Schmidt QR of a
/// Gaussian random matrix.
pub fn orthonormal_directions<R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize) -> Result<Array2<f64>> {
    if n > d {
        return Err(Error::invalid(format!("cannot place {n} orthonormal class means in {d} dimensions")));
    }
    let mut q = Array2::<f64>::zeros((n, d));
    let mut filled = 0;
    while filled < n {
        let mut v: Array1<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for k in 0..filled {
            let proj = q.row(k).dot(&v);
            v.scaled_add(-proj, &q.row(k));
        }
        let norm = v.dot(&v).sqrt();
        // a draw (numerically) inside the span is discarded
        if norm > 1e-8 {
            q.row_mut(filled).assign(&(v / norm));
            filled += 1;
        }
    }
    Ok(q)
}

/// Gaussian class clusters around `separation`-scaled orthonormal means.
pub fn synth_dataset<R: Rng + ?Sized>(params: &SynthParams, rng: &mut R) -> Result<EmbeddingDataset> {
    let SynthParams { n_classes, per_class, dim, separation, noise } = *params;
    if n_classes < 2 || per_class < 2 || dim == 0 {
        return Err(Error::invalid(format!(
            "synthetic data needs >= 2 classes, >= 2 samples per class and dim >= 1 \
             (got {n_classes} classes, {per_class} per class, dim {dim})"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite() && noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid("separation and noise must be finite and non-negative"));
    }
    let means = orthonormal_directions(rng, n_classes, dim)? * separation;
    let classes = (0..n_classes)
        .map(|c| {
            Array2::from_shape_fn((per_class, dim), |(_, j)| {
                let eps: f64 = rng.sample(StandardNormal);
                (means[[c, j]] + noise * eps) as f32
            })
        })
        .collect();
    EmbeddingDataset::new(classes)
}
