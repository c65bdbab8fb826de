//! The dependence objective `-HSIC(Z, Y) + γ·HSIC(Z, Z)` and its analytic
//! gradient with respect to the head.

use ndarray::{Array2, Axis};

use super::head::{backward, forward, LinearHead};
use crate::error::{Error, Result};
use crate::hsic::{estimator_gradient_wrt_k, hsic_unbiased};
use crate::kernels::{
    delta_label_kernel, kernel_matrix, pairwise_sq_distances, radial_from_sq_distances, EmbeddingMatrix, KernelFamily,
    KernelMatrix, KernelSpec, LabelVector,
};

/// Bandwidths and weighting of the two HSIC terms. Bandwidths are held fixed
/// while the head is optimized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MokdTerms {
    pub sigma_zy: f64,
    pub sigma_zz: f64,
    pub gamma: f64,
    pub family: KernelFamily,
}

impl MokdTerms {
    fn specs(&self) -> Result<(KernelSpec, KernelSpec)> {
        if !(self.gamma >= 0.0) {
            return Err(Error::invalid(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        Ok((KernelSpec::new(self.family, self.sigma_zy)?, KernelSpec::new(self.family, self.sigma_zz)?))
    }
}

fn check_size(z: &EmbeddingMatrix, labels: &LabelVector) -> Result<()> {
    if labels.len() != z.rows() {
        return Err(Error::DimensionMismatch { expected: z.rows(), found: labels.len() });
    }
    if z.rows() < 4 {
        return Err(Error::InsufficientSamples { needed: 4, found: z.rows() });
    }
    Ok(())
}

/// Zero-diagonal Gram matrix of `z`, reusing squared distances for radial families.
fn gram(spec: &KernelSpec, z: &EmbeddingMatrix, dists: Option<&Array2<f64>>) -> KernelMatrix {
    match dists {
        Some(d) => radial_from_sq_distances(spec, d, true),
        None => kernel_matrix(spec, z, true),
    }
}

pub fn mokd_loss(z: &EmbeddingMatrix, labels: &LabelVector, terms: &MokdTerms) -> Result<f64> {
    check_size(z, labels)?;
    let (zy, zz) = terms.specs()?;
    let dists = terms.family.is_radial().then(|| pairwise_sq_distances(z));
    let k_zy = gram(&zy, z, dists.as_ref());
    let l = delta_label_kernel(labels, true);
    let mut loss = -hsic_unbiased(&k_zy, &l)?;
    if terms.gamma != 0.0 {
        let k_zz = gram(&zz, z, dists.as_ref());
        loss += terms.gamma * hsic_unbiased(&k_zz, &k_zz)?;
    }
    Ok(loss)
}

/// Accumulates `Σ_j 2·w_ij·∂k(z_i, z_j)/∂z_i` into `grad_z`, where `w` is the
/// symmetric gradient with respect to the (zero-diagonal) Gram entries.
fn kernel_backward(
    spec: &KernelSpec,
    z: &EmbeddingMatrix,
    dists: Option<&Array2<f64>>,
    w: &Array2<f64>,
    grad_z: &mut Array2<f64>,
) {
    let m = z.rows();
    let zs = z.as_array();
    match dists {
        Some(d) => {
            // ∂k/∂z_i = 2κ'(r)(z_i − z_j)
            let mut coef = Array2::<f64>::zeros((m, m));
            for i in 0..m {
                for j in 0..m {
                    if i != j && w[[i, j]] != 0.0 {
                        coef[[i, j]] = 4.0 * w[[i, j]] * spec.radial_derivative(d[[i, j]]);
                    }
                }
            }
            let row_sums = coef.sum_axis(Axis(1));
            let mixed = coef.dot(zs);
            for i in 0..m {
                let mut g = grad_z.row_mut(i);
                g.scaled_add(row_sums[i], &zs.row(i));
                g -= &mixed.row(i);
            }
        }
        None => {
            // ∂cos(a,b)/∂a = b/(|a||b|) − cos·a/|a|²
            let norms: Vec<f64> = zs.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
            for i in 0..m {
                if norms[i] == 0.0 {
                    continue;
                }
                for j in 0..m {
                    if i == j || norms[j] == 0.0 || w[[i, j]] == 0.0 {
                        continue;
                    }
                    let nn = norms[i] * norms[j];
                    let cos = zs.row(i).dot(&zs.row(j)) / nn;
                    let scale = 2.0 * w[[i, j]];
                    let mut g = grad_z.row_mut(i);
                    g.scaled_add(scale / nn, &zs.row(j));
                    g.scaled_add(-scale * cos / (norms[i] * norms[i]), &zs.row(i));
                }
            }
        }
    }
}

/// Objective value and `∂L/∂θ` for `Z = transform(head, u, normalize)`.
pub fn mokd_loss_and_gradient(
    head: &LinearHead,
    u: &EmbeddingMatrix,
    labels: &LabelVector,
    terms: &MokdTerms,
    normalize: bool,
) -> Result<(f64, Array2<f64>)> {
    let fwd = forward(head, u, normalize)?;
    let z = &fwd.z;
    check_size(z, labels)?;
    let (zy, zz) = terms.specs()?;
    let dists = terms.family.is_radial().then(|| pairwise_sq_distances(z));

    let k_zy = gram(&zy, z, dists.as_ref());
    let l = delta_label_kernel(labels, true);
    let mut loss = -hsic_unbiased(&k_zy, &l)?;
    let mut grad_z = Array2::<f64>::zeros(z.as_array().raw_dim());

    let w_zy = estimator_gradient_wrt_k(l.view()) * -1.0;
    kernel_backward(&zy, z, dists.as_ref(), &w_zy, &mut grad_z);

    if terms.gamma != 0.0 {
        let k_zz = gram(&zz, z, dists.as_ref());
        loss += terms.gamma * hsic_unbiased(&k_zz, &k_zz)?;
        // HSIC(K, K) is symmetric in its arguments, so both slots contribute equally.
        let w_zz = estimator_gradient_wrt_k(k_zz.view()) * (2.0 * terms.gamma);
        kernel_backward(&zz, z, dists.as_ref(), &w_zz, &mut grad_z);
    }
    Ok((loss, backward(&fwd, u, grad_z)))
}

pub fn mokd_gradient(
    head: &LinearHead,
    u: &EmbeddingMatrix,
    labels: &LabelVector,
    terms: &MokdTerms,
    normalize: bool,
) -> Result<Array2<f64>> {
    Ok(mokd_loss_and_gradient(head, u, labels, terms, normalize)?.1)
}
