//! Multi-episode evaluation, similarity-matrix export, and a numeric check of
//! the exponential-mean bound used in the NCC analysis.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;

use crate::adapt::{run_episode, AdaptConfig, EpisodeResult};
use crate::error::{Error, Result};
use crate::tasks::{sample_task_for_episode, EmbeddingDataset, SamplerConfig, Task};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub episode: u64,
    pub seed: u64,
    pub accuracy: f64,
    pub ways: usize,
    pub support_size: usize,
    pub sigma_zy: Option<f64>,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_accuracy: f64,
    pub ci95: f64,
    pub per_episode: Vec<EpisodeSummary>,
}

/// Mean and `1.96·s/√n` half-width with the unbiased sample standard
/// deviation. A single value has a zero-width interval.
pub fn mean_and_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * var.sqrt() / (n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalOptions {
    /// Worker threads; `None` uses the global pool, `Some(1)` runs serially.
    pub jobs: Option<usize>,
}

fn run_one(
    dataset: &EmbeddingDataset,
    sampler: &SamplerConfig,
    adapt: &AdaptConfig,
    base_seed: u64,
    index: usize,
    on_episode: &(dyn Fn(usize, &Task, &EpisodeResult) + Sync),
) -> Result<EpisodeSummary> {
    let wrap = |e: Error| Error::Episode { index, source: Box::new(e) };
    let task = sample_task_for_episode(dataset, sampler, base_seed, index as u64).map_err(wrap)?;
    let result = run_episode(&task, adapt).map_err(wrap)?;
    on_episode(index, &task, &result);
    Ok(EpisodeSummary {
        episode: index as u64,
        seed: base_seed,
        accuracy: result.query_accuracy,
        ways: task.n_ways(),
        support_size: task.support.rows(),
        sigma_zy: result.sigma_zy,
        final_loss: result.final_loss(),
    })
}

pub fn evaluate(
    dataset: &EmbeddingDataset,
    sampler: &SamplerConfig,
    adapt: &AdaptConfig,
    n_episodes: usize,
    base_seed: u64,
) -> Result<EvalReport> {
    evaluate_with(dataset, sampler, adapt, n_episodes, base_seed, EvalOptions::default(), &|_, _, _| {})
}

/// Runs `n_episodes` independent episodes, task `i` drawn from stream
/// `(base_seed, i)`. `on_episode` sees every finished episode (possibly from
/// several threads); the report is ordered by episode index.
pub fn evaluate_with(
    dataset: &EmbeddingDataset,
    sampler: &SamplerConfig,
    adapt: &AdaptConfig,
    n_episodes: usize,
    base_seed: u64,
    options: EvalOptions,
    on_episode: &(dyn Fn(usize, &Task, &EpisodeResult) + Sync),
) -> Result<EvalReport> {
    if n_episodes == 0 {
        return Err(Error::invalid("episode count must be at least 1"));
    }
    sampler.validate()?;
    adapt.validate()?;
    let run = |i: usize| run_one(dataset, sampler, adapt, base_seed, i, on_episode);

    let results: Vec<Result<EpisodeSummary>> = match options.jobs {
        Some(1) => (0..n_episodes).map(run).collect(),
        #[cfg(feature = "parallel")]
        jobs => {
            use rayon::prelude::*;
            let par = || (0..n_episodes).into_par_iter().map(run).collect();
            match jobs {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
                    .install(par),
                None => par(),
            }
        }
        #[cfg(not(feature = "parallel"))]
        _ => (0..n_episodes).map(run).collect(),
    };
    let per_episode = results.into_iter().collect::<Result<Vec<_>>>()?;
    let accuracies: Vec<f64> = per_episode.iter().map(|e| e.accuracy).collect();
    let (mean_accuracy, ci95) = mean_and_ci95(&accuracies);
    Ok(EvalReport { episodes: n_episodes, mean_accuracy, ci95, per_episode })
}

/// Mean off-diagonal similarity within classes and between classes.
pub fn block_contrast(similarity: &Array2<f64>, labels: &[usize]) -> (f64, f64) {
    let (mut within, mut n_within, mut between, mut n_between) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            if i == j {
                continue;
            }
            if labels[i] == labels[j] {
                within += similarity[[i, j]];
                n_within += 1;
            } else {
                between += similarity[[i, j]];
                n_between += 1;
            }
        }
    }
    (within / n_within as f64, between / n_between as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapFormat {
    Csv,
    Pgm,
}

impl fmt::Display for HeatmapFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeatmapFormat::Csv => "csv",
            HeatmapFormat::Pgm => "pgm",
        })
    }
}

impl FromStr for HeatmapFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(HeatmapFormat::Csv),
            "pgm" => Ok(HeatmapFormat::Pgm),
            other => Err(Error::invalid(format!("unknown heatmap format '{other}'"))),
        }
    }
}

/// Row indices where the class label changes, starting with 0.
pub fn class_boundaries(labels: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        if i == 0 || labels[i - 1] != *l {
            out.push(i);
        }
    }
    out
}

/// Cosine similarity in [-1, 1] to an 8-bit gray level.
pub fn similarity_to_pixel(sim: f64) -> u8 {
    (255.0 * (sim.clamp(-1.0, 1.0) + 1.0) / 2.0).round() as u8
}

pub fn write_similarity_csv<W: Write>(matrix: &Array2<f64>, boundaries: &[usize], mut out: W) -> Result<()> {
    let b: Vec<String> = boundaries.iter().map(usize::to_string).collect();
    writeln!(out, "# class_boundaries: {}", b.join(","))?;
    for row in matrix.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Parses a matrix written by [`write_similarity_csv`], returning it with its boundaries.
pub fn read_similarity_csv<R: Read>(input: R) -> Result<(Array2<f64>, Vec<usize>)> {
    let mut boundaries = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in BufReader::new(input).lines() {
        let line = line?;
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("# class_boundaries:") {
            boundaries = rest
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse().map_err(|_| Error::invalid(format!("bad boundary '{s}'"))))
                .collect::<Result<_>>()?;
        } else if !line.is_empty() && !line.starts_with('#') {
            rows.push(
                line.split(',')
                    .map(|s| s.trim().parse().map_err(|_| Error::invalid(format!("bad value '{s}'"))))
                    .collect::<Result<_>>()?,
            );
        }
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid("ragged similarity matrix"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let matrix = Array2::from_shape_vec((rows.len(), cols), flat).map_err(|e| Error::invalid(e.to_string()))?;
    Ok((matrix, boundaries))
}

/// Binary PGM (P5), one pixel per matrix entry.
pub fn write_similarity_pgm<W: Write>(matrix: &Array2<f64>, mut out: W) -> Result<()> {
    write!(out, "P5\n{} {}\n255\n", matrix.ncols(), matrix.nrows())?;
    let pixels: Vec<u8> = matrix.iter().map(|&v| similarity_to_pixel(v)).collect();
    out.write_all(&pixels)?;
    Ok(())
}

fn write_matrix(matrix: &Array2<f64>, boundaries: &[usize], path: &Path, format: HeatmapFormat) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    match format {
        HeatmapFormat::Csv => write_similarity_csv(matrix, boundaries, &mut out)?,
        HeatmapFormat::Pgm => write_similarity_pgm(matrix, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

/// Writes the support-vs-support similarity matrix of an episode.
pub fn similarity_export(result: &EpisodeResult, path: impl AsRef<Path>, format: HeatmapFormat) -> Result<()> {
    write_matrix(&result.support_similarity, &class_boundaries(&result.support_labels), path.as_ref(), format)
}

/// Writes the query-vs-support similarity matrix; boundaries refer to query rows.
pub fn query_similarity_export(result: &EpisodeResult, path: impl AsRef<Path>, format: HeatmapFormat) -> Result<()> {
    write_matrix(&result.query_support_similarity, &class_boundaries(&result.query_labels), path.as_ref(), format)
}

/// Slack in `exp(mean a) >= mean(exp a) − C`: `C = e + (e − 1)·ln(e − 1)`.
pub fn exp_mean_slack() -> f64 {
    let e = std::f64::consts::E;
    e + (e - 1.0) * (e - 1.0).ln()
}

/// Checks `exp(mean a) >= mean(exp a) − (e + (e−1)ln(e−1))` for entries in [0, 1].
pub fn exp_mean_check(a: &[f64]) -> Result<bool> {
    if a.is_empty() {
        return Err(Error::invalid("empty vector"));
    }
    if let Some(v) = a.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("entry {v} outside [0, 1]")));
    }
    let n = a.len() as f64;
    let lhs = (a.iter().sum::<f64>() / n).exp();
    let rhs = a.iter().map(|v| v.exp()).sum::<f64>() / n - exp_mean_slack();
    Ok(lhs >= rhs)
}
