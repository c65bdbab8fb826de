//! wasm-bindgen surface for the browser demo in `www/`.
//!
//! Everything runs on generated data: a bandwidth power-ratio table, a
//! single adaptation episode (MOKD or the NCC baseline) and kernel profiles.

use mokd::adapt::{run_episode, AdaptConfig, LossKind};
use mokd::eval::{block_contrast, class_boundaries};
use mokd::hsic::{select_bandwidth, BandwidthGrid, DependenceTarget};
use mokd::kernels::eval_kernel;
use mokd::tasks::{sample_fixed_task, synth_dataset, task_rng, SynthParams};
use mokd::{KernelFamily, KernelSpec};
use wasm_bindgen::prelude::*;

fn family(name: &str) -> Result<KernelFamily, String> {
    name.parse().map_err(|e: mokd::Error| e.to_string())
}

#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct BandwidthTable {
    coefficients: Vec<f64>,
    sigmas: Vec<f64>,
    hsic: Vec<f64>,
    variances: Vec<f64>,
    ratios: Vec<f64>,
    selected: usize,
}

#[wasm_bindgen]
impl BandwidthTable {
    pub fn coefficients(&self) -> Vec<f64> {
        self.coefficients.clone()
    }
    pub fn sigmas(&self) -> Vec<f64> {
        self.sigmas.clone()
    }
    pub fn hsic(&self) -> Vec<f64> {
        self.hsic.clone()
    }
    pub fn variances(&self) -> Vec<f64> {
        self.variances.clone()
    }
    pub fn ratios(&self) -> Vec<f64> {
        self.ratios.clone()
    }
    pub fn selected(&self) -> usize {
        self.selected
    }
}

pub fn bandwidth_table_impl(
    seed: u64,
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    noise: f64,
    kernel: &str,
) -> Result<BandwidthTable, String> {
    let params = SynthParams { n_classes: classes, per_class, dim, separation, noise };
    let dataset = synth_dataset(&params, &mut task_rng(seed, 0)).map_err(|e| e.to_string())?;
    let (z, labels) = dataset.flatten().map_err(|e| e.to_string())?;
    let sel = select_bandwidth(&z, DependenceTarget::Labels(&labels), family(kernel)?, &BandwidthGrid::default())
        .map_err(|e| e.to_string())?;
    Ok(BandwidthTable {
        coefficients: sel.table.iter().map(|r| r.coefficient).collect(),
        sigmas: sel.table.iter().map(|r| r.sigma).collect(),
        hsic: sel.table.iter().map(|r| r.value).collect(),
        variances: sel.table.iter().map(|r| r.variance).collect(),
        ratios: sel.table.iter().map(|r| r.power_ratio).collect(),
        selected: sel.index,
    })
}

/// Power-ratio table over the default coefficient grid for a generated pool.
#[wasm_bindgen]
pub fn bandwidth_table(
    seed: u64,
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    noise: f64,
    kernel: &str,
) -> Result<BandwidthTable, JsError> {
    bandwidth_table_impl(seed, classes, per_class, dim, separation, noise, kernel).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct EpisodeView {
    size: usize,
    similarity: Vec<f64>,
    boundaries: Vec<usize>,
    loss_trace: Vec<f64>,
    accuracy: f64,
    within: f64,
    between: f64,
    sigma: f64,
}

#[wasm_bindgen]
impl EpisodeView {
    /// Support rows; the similarity matrix is `size × size`, row-major.
    pub fn size(&self) -> usize {
        self.size
    }
    pub fn similarity(&self) -> Vec<f64> {
        self.similarity.clone()
    }
    pub fn boundaries(&self) -> Vec<usize> {
        self.boundaries.clone()
    }
    pub fn loss_trace(&self) -> Vec<f64> {
        self.loss_trace.clone()
    }
    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }
    pub fn within(&self) -> f64 {
        self.within
    }
    pub fn between(&self) -> f64 {
        self.between
    }
    /// Selected HSIC(Z, Y) bandwidth; NaN for the NCC baseline.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

#[allow(clippy::too_many_arguments)]
pub fn episode_impl(
    seed: u64,
    ways: usize,
    shots: usize,
    dim: usize,
    separation: f64,
    noise: f64,
    loss: &str,
    gamma: f64,
    steps: usize,
    learning_rate: f64,
) -> Result<EpisodeView, String> {
    let queries = 10;
    let params = SynthParams { n_classes: ways + 2, per_class: shots + queries + 5, dim, separation, noise };
    let mut rng = task_rng(seed, 0);
    let dataset = synth_dataset(&params, &mut rng).map_err(|e| e.to_string())?;
    let task = sample_fixed_task(&dataset, ways, shots, queries, &mut rng).map_err(|e| e.to_string())?;
    let loss: LossKind = loss.parse().map_err(|e: mokd::Error| e.to_string())?;
    let config = AdaptConfig { loss, gamma, steps, learning_rate, ..Default::default() };
    let result = run_episode(&task, &config).map_err(|e| e.to_string())?;
    let (within, between) = block_contrast(&result.support_similarity, &result.support_labels);
    Ok(EpisodeView {
        size: result.support_similarity.nrows(),
        similarity: result.support_similarity.iter().copied().collect(),
        boundaries: class_boundaries(&result.support_labels),
        accuracy: result.query_accuracy,
        within,
        between,
        sigma: result.sigma_zy.unwrap_or(f64::NAN),
        loss_trace: result.loss_trace,
    })
}

/// One adaptation episode on a generated task; `loss` is `mokd` or `ncc`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn run_demo_episode(
    seed: u64,
    ways: usize,
    shots: usize,
    dim: usize,
    separation: f64,
    noise: f64,
    loss: &str,
    gamma: f64,
    steps: usize,
    learning_rate: f64,
) -> Result<EpisodeView, JsError> {
    episode_impl(seed, ways, shots, dim, separation, noise, loss, gamma, steps, learning_rate)
        .map_err(|e| JsError::new(&e))
}

pub fn kernel_profile_impl(kernel: &str, sigma: f64, r_max: f64, points: usize) -> Result<Vec<f64>, String> {
    let family = family(kernel)?;
    if family == KernelFamily::CosineLinear {
        return Err("cosine kernel has no distance profile".into());
    }
    let spec = KernelSpec::new(family, sigma).map_err(|e| e.to_string())?;
    let n = points.max(2);
    (0..n)
        .map(|i| {
            let r = [r_max * i as f64 / (n - 1) as f64];
            eval_kernel(&spec, (&[0.0][..]).into(), (&r[..]).into()).map_err(|e| e.to_string())
        })
        .collect()
}

/// Kernel value against distance on `[0, r_max]`, `points` samples.
#[wasm_bindgen]
pub fn kernel_profile(kernel: &str, sigma: f64, r_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    kernel_profile_impl(kernel, sigma, r_max, points).map_err(|e| JsError::new(&e))
}
