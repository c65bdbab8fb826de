use ndarray::Array2;

use super::head::{transform, LinearHead};
use super::ncc::{ncc_loss_and_gradient, ncc_predict};
use super::objective::{mokd_loss_and_gradient, MokdTerms};
use super::optim::Adadelta;
use super::{AdaptConfig, LossKind};
use crate::error::{Error, Result};
use crate::hsic::{select_bandwidth, DependenceTarget};
use crate::kernels::cosine_similarity_matrix;
use crate::tasks::Task;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub final_head: LinearHead,
    /// Objective value before each update, one entry per step.
    pub loss_trace: Vec<f64>,
    /// `None` for the nearest-centroid baseline, which has no bandwidths.
    pub sigma_zy: Option<f64>,
    pub sigma_zz: Option<f64>,
    pub coefficient_zy: Option<f64>,
    pub query_accuracy: f64,
    pub predictions: Vec<usize>,
    /// Cosine similarities among the adapted support rows, `m × m`.
    pub support_similarity: Array2<f64>,
    /// Cosine similarities of adapted query rows against support rows.
    pub query_support_similarity: Array2<f64>,
    pub support_labels: Vec<usize>,
    pub query_labels: Vec<usize>,
}

impl EpisodeResult {
    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("steps >= 1")
    }
}

/// One adaptation episode: bandwidth selection on the identity-head support
/// representations, `steps` Adadelta updates with bandwidths frozen, then
/// nearest-centroid classification of the query set.
pub fn run_episode(task: &Task, config: &AdaptConfig) -> Result<EpisodeResult> {
    config.validate()?;
    let support = &task.support;
    let labels = &task.support_labels;
    let m = support.rows();
    if m < 4 {
        return Err(Error::InsufficientSamples { needed: 4, found: m });
    }
    if labels.n_classes() < 2 {
        return Err(Error::invalid("episode needs at least two support classes"));
    }
    let normalize = config.normalize_features;
    let mut head = LinearHead::identity(support.dim());

    let terms = match config.loss {
        LossKind::Ncc => None,
        LossKind::Mokd => {
            let z = transform(&head, support, normalize)?;
            let zy = select_bandwidth(&z, DependenceTarget::Labels(labels), config.kernel_family, &config.grid)?;
            let (sigma_zz, _) = if config.share_zz_coefficient {
                // HSIC(Z, Z) uses the same median base, so the shared coefficient gives the same σ
                (zy.sigma, zy.coefficient)
            } else {
                let zz = select_bandwidth(&z, DependenceTarget::Embeddings(&z), config.kernel_family, &config.grid)?;
                (zz.sigma, zz.coefficient)
            };
            Some((
                MokdTerms { sigma_zy: zy.sigma, sigma_zz, gamma: config.gamma, family: config.kernel_family },
                zy.coefficient,
            ))
        }
    };

    let mut optimizer = Adadelta::new(support.dim(), config.optimizer)?;
    let mut loss_trace = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let (loss, grad) = match &terms {
            Some((t, _)) => mokd_loss_and_gradient(&head, support, labels, t, normalize)?,
            None => ncc_loss_and_gradient(&head, support, labels, normalize)?,
        };
        if !loss.is_finite() || !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite("adaptation gradient"));
        }
        loss_trace.push(loss);
        optimizer.step(&mut head, &grad, config.learning_rate, config.weight_decay)?;
    }

    let predictions = ncc_predict(&head, support, labels, &task.query, normalize)?;
    let query_labels = task.query_labels.as_slice();
    let correct = predictions.iter().zip(query_labels).filter(|(p, y)| p == y).count();
    let query_accuracy = correct as f64 / query_labels.len() as f64;

    // similarities are reported on normalized rows regardless of the training mode
    let zs = transform(&head, support, true)?;
    let zq = transform(&head, &task.query, true)?;

    Ok(EpisodeResult {
        loss_trace,
        sigma_zy: terms.map(|(t, _)| t.sigma_zy),
        sigma_zz: terms.map(|(t, _)| t.sigma_zz),
        coefficient_zy: terms.map(|(_, c)| c),
        query_accuracy,
        predictions,
        support_similarity: cosine_similarity_matrix(&zs, &zs),
        query_support_similarity: cosine_similarity_matrix(&zq, &zs),
        support_labels: labels.as_slice().to_vec(),
        query_labels: query_labels.to_vec(),
        final_head: head,
    })
}
