//! Vary-way vary-shot episode sampling.
//!
//! Given a pool of classes, one episode is drawn as:
//!
//! - ways `N` uniform on `[5, min(N_max, available)]`, classes uniform without replacement;
//! - query shots per class `q = min(10, min_c ⌊|c|/2⌋)`;
//! - support size `s = min(500, Σ_c ⌈β·min(100, |c| − q)⌉)`, `β ~ U(0, 1]`;
//! - per-class shots `K_c = min(⌊R_c·(s − N)⌋ + 1, |c| − q)` where
//!   `R_c ∝ exp(α_c)|c|` and `α_c ~ U[ln ½, ln 2)`.

use ndarray::Array2;
use rand::seq::index;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EmbeddingDataset, Provenance, Task};
use crate::error::{Error, Result};
use crate::kernels::{EmbeddingMatrix, LabelVector};

pub const MIN_WAYS: usize = 5;
const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    #[default]
    VaryWayVaryShot,
    /// Fixed `ways`-way `shots`-shot episodes with `queries` query rows per class.
    Fixed { ways: usize, shots: usize, queries: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub n_max: usize,
    pub max_support: usize,
    pub max_query_per_class: usize,
    pub max_shots_per_class: usize,
    pub seed: u64,
    pub mode: SamplingMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_max: 50,
            max_support: 500,
            max_query_per_class: 10,
            max_shots_per_class: 100,
            seed: 0,
            mode: SamplingMode::VaryWayVaryShot,
        }
    }
}

impl SamplerConfig {
    pub fn fixed(ways: usize, shots: usize, queries: usize) -> Self {
        SamplerConfig { mode: SamplingMode::Fixed { ways, shots, queries }, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max < MIN_WAYS {
            return Err(Error::invalid(format!("n_max must be at least {MIN_WAYS}, got {}", self.n_max)));
        }
        if self.max_support == 0 || self.max_query_per_class == 0 || self.max_shots_per_class == 0 {
            return Err(Error::invalid("sampler caps must be positive"));
        }
        if let SamplingMode::Fixed { ways, shots, queries } = self.mode {
            if ways < 2 || shots == 0 || queries == 0 || ways * shots < 4 {
                return Err(Error::invalid(format!(
                    "fixed episodes need ways >= 2, shots >= 1, queries >= 1 and at least 4 support rows \
                     (got {ways}-way {shots}-shot {queries}-query)"
                )));
            }
        }
        Ok(())
    }
}

/// Independent RNG stream for episode `episode` under `seed`.
pub fn task_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

pub fn sample_way_count<R: Rng + ?Sized>(rng: &mut R, available_classes: usize, n_max: usize) -> Result<usize> {
    if available_classes < MIN_WAYS {
        return Err(Error::invalid(format!(
            "need at least {MIN_WAYS} classes with two or more examples, found {available_classes}"
        )));
    }
    if n_max < MIN_WAYS {
        return Err(Error::invalid(format!("n_max must be at least {MIN_WAYS}, got {n_max}")));
    }
    Ok(rng.random_range(MIN_WAYS..=n_max.min(available_classes)))
}

fn query_size_capped(sizes: &[usize], cap: usize) -> Result<usize> {
    let smallest = *sizes.iter().min().ok_or_else(|| Error::invalid("no classes selected"))?;
    if smallest < 2 {
        return Err(Error::invalid(format!("every class needs at least 2 examples, found {smallest}")));
    }
    Ok(cap.min(smallest / 2))
}

/// `q = min(10, min_c ⌊|c|/2⌋)`.
pub fn compute_query_size(selected_class_sizes: &[usize]) -> Result<usize> {
    query_size_capped(selected_class_sizes, 10)
}

/// `β` uniform on `(0, 1]`.
pub fn draw_beta<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Support size for a given `β`, with the per-class and total caps.
pub fn support_size_from_beta(
    sizes: &[usize],
    q: usize,
    beta: f64,
    max_shots_per_class: usize,
    max_support: usize,
) -> Result<usize> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid(format!("beta must lie in (0, 1], got {beta}")));
    }
    let mut total = 0usize;
    for &size in sizes {
        if size <= q {
            return Err(Error::invalid(format!("class of size {size} leaves no support rows after {q} queries")));
        }
        let available = max_shots_per_class.min(size - q);
        total += (beta * available as f64).ceil() as usize;
    }
    Ok(max_support.min(total))
}

/// `s = min(500, Σ_c ⌈β·min(100, |c| − q)⌉)` with one `β` draw.
pub fn compute_support_size<R: Rng + ?Sized>(rng: &mut R, selected_class_sizes: &[usize], q: usize) -> Result<usize> {
    let beta = draw_beta(rng);
    support_size_from_beta(selected_class_sizes, q, beta, 100, 500)
}

/// One `α_c` per class, uniform on `[ln ½, ln 2)`.
pub fn draw_alphas<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let (lo, hi) = (0.5f64.ln(), 2f64.ln());
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Per-class shots for given `α`.
pub fn shots_from_alphas(sizes: &[usize], q: usize, s: usize, alphas: &[f64]) -> Result<Vec<usize>> {
    let n = sizes.len();
    if alphas.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: alphas.len() });
    }
    if s < n {
        return Err(Error::invalid(format!("support size {s} is smaller than the number of classes {n}")));
    }
    if let Some(&size) = sizes.iter().find(|&&size| size <= q) {
        return Err(Error::invalid(format!("class of size {size} leaves no support rows after {q} queries")));
    }
    let weights: Vec<f64> = alphas.iter().zip(sizes).map(|(a, &size)| a.exp() * size as f64).collect();
    let total: f64 = weights.iter().sum();
    let budget = (s - n) as f64;
    Ok(weights
        .iter()
        .zip(sizes)
        .map(|(w, &size)| {
            let share = w / total;
            ((share * budget).floor() as usize + 1).min(size - q)
        })
        .collect())
}

pub fn compute_shots<R: Rng + ?Sized>(
    rng: &mut R,
    selected_class_sizes: &[usize],
    q: usize,
    s: usize,
) -> Result<Vec<usize>> {
    let alphas = draw_alphas(rng, selected_class_sizes.len());
    shots_from_alphas(selected_class_sizes, q, s, &alphas)
}

/// Draws the support and query rows of each class and assembles the task.
fn assemble<R: Rng + ?Sized>(
    rng: &mut R,
    dataset: &EmbeddingDataset,
    classes: &[usize],
    shots: &[usize],
    q: usize,
    provenance: Provenance,
) -> Result<Task> {
    let d = dataset.dim();
    let m: usize = shots.iter().sum();
    let mut support = Array2::zeros((m, d));
    let mut query = Array2::zeros((q * classes.len(), d));
    let mut support_labels = Vec::with_capacity(m);
    let mut query_labels = Vec::with_capacity(q * classes.len());
    let mut support_rows = Vec::with_capacity(m);
    let mut query_rows = Vec::with_capacity(q * classes.len());
    for (label, (&c, &k)) in classes.iter().zip(shots).enumerate() {
        let pool = dataset.class(c);
        let picks = index::sample(rng, pool.nrows(), k + q).into_vec();
        for (n, &row) in picks.iter().enumerate() {
            let values = pool.row(row).mapv(f64::from);
            if n < k {
                support.row_mut(support_labels.len()).assign(&values);
                support_labels.push(label);
                support_rows.push(row);
            } else {
                query.row_mut(query_labels.len()).assign(&values);
                query_labels.push(label);
                query_rows.push(row);
            }
        }
    }
    Ok(Task {
        support: EmbeddingMatrix::new(support)?,
        support_labels: LabelVector::new(support_labels)?,
        query: EmbeddingMatrix::new(query)?,
        query_labels: LabelVector::new(query_labels)?,
        classes: classes.to_vec(),
        support_rows,
        query_rows,
        provenance,
    })
}

fn provenance(dataset: &EmbeddingDataset, cfg: &SamplerConfig, episode: u64) -> Provenance {
    Provenance { dataset: dataset.name().to_string(), seed: cfg.seed, episode }
}

/// One vary-way vary-shot task. Draw order per attempt: ways, classes, `β`,
/// `α`, then the row permutation of each selected class.
pub fn sample_task<R: Rng + ?Sized>(dataset: &EmbeddingDataset, cfg: &SamplerConfig, rng: &mut R) -> Result<Task> {
    sample_task_inner(dataset, cfg, rng, 0)
}

fn sample_task_inner<R: Rng + ?Sized>(
    dataset: &EmbeddingDataset,
    cfg: &SamplerConfig,
    rng: &mut R,
    episode: u64,
) -> Result<Task> {
    cfg.validate()?;
    if let SamplingMode::Fixed { ways, shots, queries } = cfg.mode {
        return sample_fixed_inner(dataset, ways, shots, queries, rng, provenance(dataset, cfg, episode));
    }
    let sizes = dataset.class_sizes();
    let eligible: Vec<usize> = (0..sizes.len()).filter(|&c| sizes[c] >= 2).collect();
    for _ in 0..MAX_REDRAWS {
        let n = sample_way_count(rng, eligible.len(), cfg.n_max)?;
        let classes: Vec<usize> = index::sample(rng, eligible.len(), n).into_iter().map(|i| eligible[i]).collect();
        let selected: Vec<usize> = classes.iter().map(|&c| sizes[c]).collect();
        let q = query_size_capped(&selected, cfg.max_query_per_class)?;
        let beta = draw_beta(rng);
        let s = support_size_from_beta(&selected, q, beta, cfg.max_shots_per_class, cfg.max_support)?;
        let alphas = draw_alphas(rng, n);
        let shots = shots_from_alphas(&selected, q, s, &alphas)?;
        let m: usize = shots.iter().sum();
        if m < 4 || n < 2 {
            continue;
        }
        return assemble(rng, dataset, &classes, &shots, q, provenance(dataset, cfg, episode));
    }
    Err(Error::Degenerate(format!("no usable task after {MAX_REDRAWS} draws")))
}

fn sample_fixed_inner<R: Rng + ?Sized>(
    dataset: &EmbeddingDataset,
    ways: usize,
    shots: usize,
    queries: usize,
    rng: &mut R,
    provenance: Provenance,
) -> Result<Task> {
    let sizes = dataset.class_sizes();
    let eligible: Vec<usize> = (0..sizes.len()).filter(|&c| sizes[c] >= shots + queries).collect();
    if eligible.len() < ways {
        return Err(Error::invalid(format!(
            "{ways}-way episodes need {ways} classes with at least {} examples, found {}",
            shots + queries,
            eligible.len()
        )));
    }
    let classes: Vec<usize> = index::sample(rng, eligible.len(), ways).into_iter().map(|i| eligible[i]).collect();
    assemble(rng, dataset, &classes, &vec![shots; ways], queries, provenance)
}

/// Fixed-shape episode: `ways` classes, `shots` support and `queries` query rows each.
pub fn sample_fixed_task<R: Rng + ?Sized>(
    dataset: &EmbeddingDataset,
    ways: usize,
    shots: usize,
    queries: usize,
    rng: &mut R,
) -> Result<Task> {
    let cfg = SamplerConfig::fixed(ways, shots, queries);
    cfg.validate()?;
    sample_fixed_inner(
        dataset,
        ways,
        shots,
        queries,
        rng,
        Provenance { dataset: dataset.name().into(), seed: 0, episode: 0 },
    )
}

/// The task for episode `episode` under `seed`; fully determined by the pair.
pub fn sample_task_for_episode(
    dataset: &EmbeddingDataset,
    cfg: &SamplerConfig,
    seed: u64,
    episode: u64,
) -> Result<Task> {
    let mut rng = task_rng(seed, episode);
    let mut task = sample_task_inner(dataset, cfg, &mut rng, episode)?;
    task.provenance.seed = seed;
    Ok(task)
}
