//! Unbiased HSIC estimation, its asymptotic variance, the test-power ratio,
//! and grid-search bandwidth selection.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::kernels::{
    delta_label_kernel, kernel_matrix, median_sq_distance, pairwise_sq_distances, radial_from_sq_distances,
    EmbeddingMatrix, KernelFamily, KernelMatrix, KernelSpec, LabelVector,
};

/// Coefficients multiplying the median-heuristic bandwidth.
pub const DEFAULT_COEFFICIENTS: [f64; 15] =
    [0.001, 0.01, 0.1, 0.2, 0.25, 0.5, 0.75, 0.8, 0.9, 1.0, 1.25, 1.5, 2.0, 5.0, 10.0];

/// Stabilizer added to the variance in the power ratio.
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Normalization of the `R` term of the variance estimator.
///
/// `R = hᵀh / (4m · P^k)` with `P = (m−1)(m−2)(m−3)`. The `h` vector equals
/// twice the per-sample sum of the symmetrized order-4 core over ordered
/// triples, so `k = 2` is the consistent choice; `k = 1` is kept for
/// comparison only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceNormalization {
    #[default]
    SquaredPochhammer,
    Pochhammer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsicEstimate {
    pub coefficient: f64,
    pub sigma: f64,
    pub value: f64,
    /// Clamped to be non-negative.
    pub variance: f64,
    pub raw_variance: f64,
    pub power_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthGrid {
    coefficients: Vec<f64>,
    epsilon: f64,
}

impl Default for BandwidthGrid {
    fn default() -> Self {
        BandwidthGrid { coefficients: DEFAULT_COEFFICIENTS.to_vec(), epsilon: DEFAULT_EPSILON }
    }
}

impl BandwidthGrid {
    pub fn new(coefficients: Vec<f64>, epsilon: f64) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::invalid("bandwidth grid is empty"));
        }
        if let Some(c) = coefficients.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::invalid(format!("grid coefficient must be positive, got {c}")));
        }
        if !(epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(BandwidthGrid { coefficients, epsilon })
    }

    pub fn singleton(coefficient: f64, epsilon: f64) -> Result<Self> {
        Self::new(vec![coefficient], epsilon)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        self.epsilon = epsilon;
        Ok(self)
    }
}

fn check_pair(kt: &KernelMatrix, lt: &KernelMatrix) -> Result<usize> {
    let m = kt.size();
    if lt.size() != m {
        return Err(Error::DimensionMismatch { expected: m, found: lt.size() });
    }
    if m < 4 {
        return Err(Error::InsufficientSamples { needed: 4, found: m });
    }
    Ok(m)
}

/// Aggregates shared by the estimator and the variance.
struct Moments {
    trace_kl: f64,
    sum_k: f64,
    sum_l: f64,
    sum_kl: f64,
    k_rows: Array1<f64>,
    l_rows: Array1<f64>,
}

fn moments(k: ArrayView2<'_, f64>, l: ArrayView2<'_, f64>) -> Moments {
    let trace_kl = (&k * &l.t()).sum();
    let k_rows = k.sum_axis(Axis(1));
    let l_rows = l.sum_axis(Axis(1));
    let k_cols = k.sum_axis(Axis(0));
    Moments { trace_kl, sum_k: k_rows.sum(), sum_l: l_rows.sum(), sum_kl: k_cols.dot(&l_rows), k_rows, l_rows }
}

fn estimate_from(m: usize, mo: &Moments) -> f64 {
    let mf = m as f64;
    (mo.trace_kl + mo.sum_k * mo.sum_l / ((mf - 1.0) * (mf - 2.0)) - 2.0 * mo.sum_kl / (mf - 2.0)) / (mf * (mf - 3.0))
}

/// Unbiased HSIC estimate from two zero-diagonal Gram matrices.
pub fn hsic_unbiased(kt: &KernelMatrix, lt: &KernelMatrix) -> Result<f64> {
    let m = check_pair(kt, lt)?;
    Ok(estimate_from(m, &moments(kt.view(), lt.view())))
}

/// Reference implementation of [`hsic_unbiased`] written as explicit scalar
/// index sums with no matrix algebra. Intended for cross-checking.
pub fn hsic_naive_oracle(kt: &KernelMatrix, lt: &KernelMatrix) -> Result<f64> {
    let m = check_pair(kt, lt)?;
    let k = kt.as_array();
    let l = lt.as_array();
    let mut trace = 0.0;
    let mut sum_k = 0.0;
    let mut sum_l = 0.0;
    for i in 0..m {
        for j in 0..m {
            trace += k[[i, j]] * l[[j, i]];
            sum_k += k[[i, j]];
            sum_l += l[[i, j]];
        }
    }
    // 1ᵀ K L 1 = Σ_i Σ_j Σ_q K[i,j] L[j,q]
    let mut triple = 0.0;
    for i in 0..m {
        for j in 0..m {
            let mut row = 0.0;
            for q in 0..m {
                row += l[[j, q]];
            }
            triple += k[[i, j]] * row;
        }
    }
    let mf = m as f64;
    let bracket = trace + sum_k * sum_l / ((mf - 1.0) * (mf - 2.0)) - 2.0 * triple / (mf - 2.0);
    Ok(bracket / (mf * (mf - 3.0)))
}

/// The `h` vector of the variance estimator.
pub fn h_vector(kt: &KernelMatrix, lt: &KernelMatrix) -> Result<Array1<f64>> {
    let m = check_pair(kt, lt)?;
    let mo = moments(kt.view(), lt.view());
    Ok(h_from(m, kt.view(), lt.view(), &mo))
}

fn h_from(m: usize, k: ArrayView2<'_, f64>, l: ArrayView2<'_, f64>, mo: &Moments) -> Array1<f64> {
    let mf = m as f64;
    let hadamard_rows = (&k * &l).sum_axis(Axis(1));
    let kl1 = k.dot(&mo.l_rows);
    let lk1 = l.dot(&mo.k_rows);
    let mut h = hadamard_rows * (mf - 2.0).powi(2);
    h -= &(&mo.k_rows * &mo.l_rows * mf);
    h.scaled_add(mo.sum_l, &mo.k_rows);
    h.scaled_add(mo.sum_k, &mo.l_rows);
    h -= mo.sum_kl;
    h += (mf - 2.0) * mo.trace_kl;
    h.scaled_add(-(mf - 2.0), &kl1);
    h.scaled_add(-(mf - 2.0), &lk1);
    h
}

fn variance_from(m: usize, h: &Array1<f64>, value: f64, norm: VarianceNormalization) -> f64 {
    let mf = m as f64;
    let poch = (mf - 1.0) * (mf - 2.0) * (mf - 3.0);
    let denom = match norm {
        VarianceNormalization::SquaredPochhammer => 4.0 * mf * poch * poch,
        VarianceNormalization::Pochhammer => 4.0 * mf * poch,
    };
    let r = h.dot(h) / denom;
    16.0 / mf * (r - value * value)
}

/// Unclamped variance estimate; may be slightly negative in finite samples.
pub fn hsic_variance_raw(
    kt: &KernelMatrix,
    lt: &KernelMatrix,
    hsic_value: f64,
    norm: VarianceNormalization,
) -> Result<f64> {
    let h = h_vector(kt, lt)?;
    Ok(variance_from(kt.size(), &h, hsic_value, norm))
}

/// Variance of the unbiased estimator, clamped at zero.
pub fn hsic_variance(kt: &KernelMatrix, lt: &KernelMatrix, hsic_value: f64) -> Result<f64> {
    Ok(hsic_variance_raw(kt, lt, hsic_value, VarianceNormalization::default())?.max(0.0))
}

pub fn power_ratio(value: f64, variance: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if variance < 0.0 {
        return Err(Error::invalid(format!("variance must be non-negative, got {variance}")));
    }
    Ok(value / (variance + epsilon).sqrt())
}

/// Estimate, variance and power ratio in one pass over the aggregates.
pub fn estimate(kt: &KernelMatrix, lt: &KernelMatrix, epsilon: f64) -> Result<HsicEstimate> {
    let m = check_pair(kt, lt)?;
    let mo = moments(kt.view(), lt.view());
    let value = estimate_from(m, &mo);
    let h = h_from(m, kt.view(), lt.view(), &mo);
    let raw_variance = variance_from(m, &h, value, VarianceNormalization::default());
    let variance = raw_variance.max(0.0);
    Ok(HsicEstimate {
        coefficient: f64::NAN,
        sigma: f64::NAN,
        value,
        variance,
        raw_variance,
        power_ratio: power_ratio(value, variance, epsilon)?,
    })
}

/// Second argument of the dependence measure.
#[derive(Debug, Clone, Copy)]
pub enum DependenceTarget<'a> {
    /// Class labels under the delta label kernel.
    Labels(&'a LabelVector),
    /// Another embedding matrix under the same kernel family and bandwidth.
    Embeddings(&'a EmbeddingMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthSelection {
    pub sigma: f64,
    pub coefficient: f64,
    /// Median-heuristic bandwidth, √(median squared distance).
    pub base_sigma: f64,
    pub index: usize,
    pub table: Vec<HsicEstimate>,
}

impl BandwidthSelection {
    pub fn selected(&self) -> &HsicEstimate {
        &self.table[self.index]
    }
}

/// Grid search over `coefficient · σ₀` maximizing the power ratio.
/// Ties go to the earliest (smallest) coefficient.
pub fn select_bandwidth(
    z: &EmbeddingMatrix,
    target: DependenceTarget<'_>,
    family: KernelFamily,
    grid: &BandwidthGrid,
) -> Result<BandwidthSelection> {
    let m = z.rows();
    if m < 4 {
        return Err(Error::InsufficientSamples { needed: 4, found: m });
    }
    let target_rows = match target {
        DependenceTarget::Labels(y) => y.len(),
        DependenceTarget::Embeddings(x) => x.rows(),
    };
    if target_rows != m {
        return Err(Error::DimensionMismatch { expected: m, found: target_rows });
    }
    let base_sigma = median_sq_distance(z)?.sqrt();

    let z_dists = family.is_radial().then(|| pairwise_sq_distances(z));
    let target_dists = match target {
        DependenceTarget::Embeddings(x) if family.is_radial() => Some(pairwise_sq_distances(x)),
        _ => None,
    };
    let fixed_label_kernel = match target {
        DependenceTarget::Labels(y) => Some(delta_label_kernel(y, true)),
        DependenceTarget::Embeddings(x) if !family.is_radial() => Some(kernel_matrix(&KernelSpec::cosine(), x, true)),
        _ => None,
    };
    let cosine_k = (!family.is_radial()).then(|| kernel_matrix(&KernelSpec::cosine(), z, true));

    let mut table = Vec::with_capacity(grid.coefficients().len());
    for &coefficient in grid.coefficients() {
        let sigma = coefficient * base_sigma;
        let spec = KernelSpec::new(family, sigma)?;
        let kt = match (&z_dists, &cosine_k) {
            (Some(d), _) => radial_from_sq_distances(&spec, d, true),
            (None, Some(k)) => k.clone(),
            (None, None) => unreachable!(),
        };
        let lt = match (&fixed_label_kernel, &target_dists) {
            (Some(l), _) => l.clone(),
            (None, Some(d)) => radial_from_sq_distances(&spec, d, true),
            (None, None) => unreachable!(),
        };
        let mut est = estimate(&kt, &lt, grid.epsilon())?;
        est.coefficient = coefficient;
        est.sigma = sigma;
        table.push(est);
    }

    let mut index = 0;
    for (i, row) in table.iter().enumerate() {
        if row.power_ratio > table[index].power_ratio {
            index = i;
        }
    }
    Ok(BandwidthSelection {
        sigma: table[index].sigma,
        coefficient: table[index].coefficient,
        base_sigma,
        index,
        table,
    })
}

/// Gradient of the unbiased estimator with respect to the entries of `K̃`,
/// holding `L̃` fixed. Symmetric with zero diagonal.
pub(crate) fn estimator_gradient_wrt_k(lt: ArrayView2<'_, f64>) -> Array2<f64> {
    let m = lt.nrows();
    let mf = m as f64;
    let l_rows = lt.sum_axis(Axis(1));
    let sum_l = l_rows.sum();
    let c = sum_l / ((mf - 1.0) * (mf - 2.0));
    let scale = 1.0 / (mf * (mf - 3.0));
    let mut g = Array2::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            if i != j {
                let sym_l = 0.5 * (lt[[i, j]] + lt[[j, i]]);
                g[[i, j]] = scale * (sym_l + c - (l_rows[i] + l_rows[j]) / (mf - 2.0));
            }
        }
    }
    g
}
