//! Episodic task sampling, synthetic embedding pools, and embedding file I/O.

mod io;
mod sampler;
mod synth;

pub use io::{
    load_embeddings, read_binary, read_csv, save_embeddings, save_embeddings_csv, write_binary, write_csv, FILE_MAGIC,
    FILE_VERSION,
};
pub use sampler::{
    compute_query_size, compute_shots, compute_support_size, draw_alphas, draw_beta, sample_fixed_task, sample_task,
    sample_task_for_episode, sample_way_count, shots_from_alphas, support_size_from_beta, task_rng, SamplerConfig,
    SamplingMode, MIN_WAYS,
};
pub use synth::{orthonormal_directions, synth_dataset, SynthParams};

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::kernels::{EmbeddingMatrix, LabelVector};

/// Per-class pools of embeddings, stored in 32-bit floats as on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    classes: Vec<Array2<f32>>,
    dim: usize,
    class_names: Option<Vec<String>>,
    name: String,
}

impl EmbeddingDataset {
    pub fn new(classes: Vec<Array2<f32>>) -> Result<Self> {
        let dim = classes.first().map_or(0, |c| c.ncols());
        if dim == 0 {
            return Err(Error::invalid("dataset needs at least one class with a non-zero dimension"));
        }
        for (c, block) in classes.iter().enumerate() {
            if block.ncols() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: block.ncols() });
            }
            if block.nrows() == 0 {
                return Err(Error::invalid(format!("class {c} is empty")));
            }
            if !block.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("dataset"));
            }
        }
        Ok(EmbeddingDataset { classes, dim, class_names: None, name: String::from("dataset") })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.classes.len() {
            return Err(Error::DimensionMismatch { expected: self.classes.len(), found: names.len() });
        }
        self.class_names = Some(names);
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class(&self, c: usize) -> ArrayView2<'_, f32> {
        self.classes[c].view()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.nrows()).collect()
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn total_samples(&self) -> usize {
        self.classes.iter().map(|c| c.nrows()).sum()
    }

    /// All samples stacked in class order, with their class ids.
    pub fn flatten(&self) -> Result<(EmbeddingMatrix, LabelVector)> {
        let total = self.total_samples();
        let mut data = Array2::zeros((total, self.dim));
        let mut labels = Vec::with_capacity(total);
        let mut row = 0;
        for (c, block) in self.classes.iter().enumerate() {
            for r in block.rows() {
                data.row_mut(row).assign(&r.mapv(f64::from));
                labels.push(c);
                row += 1;
            }
        }
        Ok((EmbeddingMatrix::new(data)?, LabelVector::new(labels)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub dataset: String,
    pub seed: u64,
    pub episode: u64,
}

/// A support/query split. Labels are positions in `classes`, which holds the
/// dataset class ids that were drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub support: EmbeddingMatrix,
    pub support_labels: LabelVector,
    pub query: EmbeddingMatrix,
    pub query_labels: LabelVector,
    pub classes: Vec<usize>,
    /// Row index inside the dataset class for every support sample.
    pub support_rows: Vec<usize>,
    pub query_rows: Vec<usize>,
    pub provenance: Provenance,
}

impl Task {
    pub fn n_ways(&self) -> usize {
        self.classes.len()
    }

    /// Support shots per task class.
    pub fn shots(&self) -> Vec<usize> {
        self.support_labels.class_counts()
    }

    pub fn queries_per_class(&self) -> Vec<usize> {
        self.query_labels.class_counts()
    }
}
