//! Kernel functions, Gram matrices, the label kernel and the median-heuristic
//! bandwidth base.
//!
//! Radial kernels are parameterized by a bandwidth `sigma`:
//!
//! | family         | k(x, y)                              |
//! |----------------|--------------------------------------|
//! | `Gaussian`     | exp(-‖x-y‖² / (2σ²))                 |
//! | `Imq`          | (1 + ‖x-y‖²/σ²)^(-1/2)               |
//! | `CosineLinear` | ⟨x,y⟩ / (‖x‖‖y‖), 0 for a zero vector |

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// `m × d` matrix of sample representations, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix(Array2<f64>);

impl EmbeddingMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::invalid("embedding matrix needs at least one row and one column"));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("embedding matrix"));
        }
        Ok(EmbeddingMatrix(data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut data = Array2::zeros((rows.len(), d));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: row.len() });
            }
            for (j, &v) in row.iter().enumerate() {
                data[[i, j]] = v;
            }
        }
        Self::new(data)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Class ids of `m` samples. Every id in `[0, n_classes)` occurs at least once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    n_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("label vector is empty"));
        }
        let n_classes = labels.iter().max().map_or(0, |&c| c + 1);
        let mut seen = vec![false; n_classes];
        for &c in &labels {
            seen[c] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("class {missing} has no samples")));
        }
        Ok(LabelVector { labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &c in &self.labels {
            counts[c] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    Gaussian,
    Imq,
    CosineLinear,
}

impl KernelFamily {
    pub fn is_radial(self) -> bool {
        !matches!(self, KernelFamily::CosineLinear)
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Imq => "imq",
            KernelFamily::CosineLinear => "cosine",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "rbf" => Ok(KernelFamily::Gaussian),
            "imq" => Ok(KernelFamily::Imq),
            "cosine" | "cosine-linear" | "cosinelinear" => Ok(KernelFamily::CosineLinear),
            other => Err(Error::invalid(format!("unknown kernel family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub sigma: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, sigma: f64) -> Result<Self> {
        if family.is_radial() && !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("bandwidth must be positive, got {sigma}")));
        }
        Ok(KernelSpec { family, sigma })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, sigma)
    }

    pub fn imq(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Imq, sigma)
    }

    pub fn cosine() -> Self {
        KernelSpec { family: KernelFamily::CosineLinear, sigma: 1.0 }
    }

    /// Radial profile k as a function of the squared distance.
    #[inline]
    pub(crate) fn radial(&self, sq_dist: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        match self.family {
            KernelFamily::Gaussian => (-sq_dist / (2.0 * s2)).exp(),
            KernelFamily::Imq => (1.0 + sq_dist / s2).powf(-0.5),
            KernelFamily::CosineLinear => unreachable!("cosine kernel is not radial"),
        }
    }

    /// Derivative of the radial profile with respect to the squared distance.
    #[inline]
    pub(crate) fn radial_derivative(&self, sq_dist: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        match self.family {
            KernelFamily::Gaussian => -(-sq_dist / (2.0 * s2)).exp() / (2.0 * s2),
            KernelFamily::Imq => -0.5 / s2 * (1.0 + sq_dist / s2).powf(-1.5),
            KernelFamily::CosineLinear => unreachable!("cosine kernel is not radial"),
        }
    }
}

/// Symmetric `m × m` Gram matrix. `zero_diag` marks the diagonal-free variant
/// used by the unbiased estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    data: Array2<f64>,
    zero_diag: bool,
}

impl KernelMatrix {
    /// Wraps a precomputed matrix. Must be square and finite; symmetry is the
    /// caller's responsibility. If `zero_diag` is set the diagonal is cleared.
    pub fn from_array(mut data: Array2<f64>, zero_diag: bool) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::DimensionMismatch { expected: data.nrows(), found: data.ncols() });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("kernel matrix"));
        }
        if zero_diag {
            data.diag_mut().fill(0.0);
        }
        Ok(KernelMatrix { data, zero_diag })
    }

    pub fn size(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_zero_diag(&self) -> bool {
        self.zero_diag
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    pub fn scaled(&self, factor: f64) -> KernelMatrix {
        KernelMatrix { data: &self.data * factor, zero_diag: self.zero_diag }
    }
}

fn check_vectors(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("kernel input"));
    }
    Ok(())
}

fn sq_dist(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub(crate) fn cosine(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> f64 {
    let nx = x.dot(&x).sqrt();
    let ny = y.dot(&y).sqrt();
    if nx == 0.0 || ny == 0.0 {
        0.0
    } else {
        x.dot(&y) / (nx * ny)
    }
}

pub fn eval_kernel(spec: &KernelSpec, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
    check_vectors(x, y)?;
    Ok(match spec.family {
        KernelFamily::CosineLinear => cosine(x, y),
        _ => spec.radial(sq_dist(x, y)),
    })
}

/// Pairwise squared distances ‖z_i − z_j‖², exactly symmetric with zero diagonal.
pub fn pairwise_sq_distances(z: &EmbeddingMatrix) -> Array2<f64> {
    let m = z.rows();
    let mut out = Array2::zeros((m, m));
    for i in 0..m {
        for j in (i + 1)..m {
            let d = sq_dist(z.row(i), z.row(j));
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    out
}

/// Cosine similarity between every row of `a` and every row of `b`.
pub fn cosine_similarity_matrix(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Array2<f64> {
    let mut out = Array2::zeros((a.rows(), b.rows()));
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            out[[i, j]] = cosine(a.row(i), b.row(j));
        }
    }
    out
}

/// Gram matrix from precomputed squared distances (radial families only).
pub(crate) fn radial_from_sq_distances(spec: &KernelSpec, dists: &Array2<f64>, zero_diag: bool) -> KernelMatrix {
    let mut data = dists.mapv(|d| spec.radial(d));
    if zero_diag {
        data.diag_mut().fill(0.0);
    }
    KernelMatrix { data, zero_diag }
}

pub fn kernel_matrix(spec: &KernelSpec, z: &EmbeddingMatrix, zero_diag: bool) -> KernelMatrix {
    let m = z.rows();
    let mut data = Array2::zeros((m, m));
    for i in 0..m {
        let start = if zero_diag { i + 1 } else { i };
        for j in start..m {
            let v = match spec.family {
                KernelFamily::CosineLinear => cosine(z.row(i), z.row(j)),
                _ => spec.radial(sq_dist(z.row(i), z.row(j))),
            };
            data[[i, j]] = v;
            data[[j, i]] = v;
        }
    }
    KernelMatrix { data, zero_diag }
}

/// L[i,j] = `l1` when y_i = y_j, `l0` otherwise.
pub fn label_kernel_matrix(labels: &LabelVector, l1: f64, l0: f64, zero_diag: bool) -> Result<KernelMatrix> {
    if !(l1 > l0) {
        return Err(Error::invalid(format!("label kernel needs l1 > l0, got l1={l1}, l0={l0}")));
    }
    let y = labels.as_slice();
    let m = y.len();
    let data = Array2::from_shape_fn((m, m), |(i, j)| {
        if zero_diag && i == j {
            0.0
        } else if y[i] == y[j] {
            l1
        } else {
            l0
        }
    });
    Ok(KernelMatrix { data, zero_diag })
}

/// Delta label kernel (l1 = 1, l0 = 0).
pub fn delta_label_kernel(labels: &LabelVector, zero_diag: bool) -> KernelMatrix {
    label_kernel_matrix(labels, 1.0, 0.0, zero_diag).expect("1 > 0")
}

fn median_of(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median of the strictly positive pairwise squared distances.
pub fn median_sq_distance(z: &EmbeddingMatrix) -> Result<f64> {
    let m = z.rows();
    if m < 2 {
        return Err(Error::InsufficientSamples { needed: 2, found: m });
    }
    let mut values = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            let d = sq_dist(z.row(i), z.row(j));
            if d > 0.0 {
                values.push(d);
            }
        }
    }
    if values.is_empty() {
        return Err(Error::Degenerate("all points identical, no bandwidth base".into()));
    }
    Ok(median_of(values))
}
