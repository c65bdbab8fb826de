//! Flat `key = value` settings shared by config files and command-line flags.

use std::fmt::Display;
use std::str::FromStr;

use mokd::adapt::{AdadeltaConfig, AdaptConfig, LossKind};
use mokd::hsic::{BandwidthGrid, DEFAULT_COEFFICIENTS, DEFAULT_EPSILON};
use mokd::tasks::{SamplerConfig, SamplingMode};
use mokd::KernelFamily;

use crate::CliError;

pub const KEYS: &[&str] = &[
    "episodes",
    "seed",
    "loss",
    "gamma",
    "learning_rate",
    "steps",
    "weight_decay",
    "epsilon",
    "coefficients",
    "kernel_family",
    "share_zz_coefficient",
    "normalize_features",
    "rho",
    "opt_eps",
    "n_max",
    "max_support",
    "max_query_per_class",
    "max_shots_per_class",
    "ways",
    "shots",
    "queries",
];

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub episodes: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub gamma: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub weight_decay: f64,
    pub epsilon: f64,
    pub coefficients: Vec<f64>,
    pub kernel_family: KernelFamily,
    pub share_zz_coefficient: bool,
    pub normalize_features: bool,
    pub rho: f64,
    pub opt_eps: f64,
    pub n_max: usize,
    pub max_support: usize,
    pub max_query_per_class: usize,
    pub max_shots_per_class: usize,
    pub ways: Option<usize>,
    pub shots: Option<usize>,
    pub queries: Option<usize>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        let adapt = AdaptConfig::default();
        let sampler = SamplerConfig::default();
        EvalSettings {
            episodes: 100,
            seed: 0,
            loss: adapt.loss,
            gamma: adapt.gamma,
            learning_rate: adapt.learning_rate,
            steps: adapt.steps,
            weight_decay: adapt.weight_decay,
            epsilon: DEFAULT_EPSILON,
            coefficients: DEFAULT_COEFFICIENTS.to_vec(),
            kernel_family: adapt.kernel_family,
            share_zz_coefficient: adapt.share_zz_coefficient,
            normalize_features: adapt.normalize_features,
            rho: adapt.optimizer.rho,
            opt_eps: adapt.optimizer.eps,
            n_max: sampler.n_max,
            max_support: sampler.max_support,
            max_query_per_class: sampler.max_query_per_class,
            max_shots_per_class: sampler.max_shots_per_class,
            ways: None,
            shots: None,
            queries: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    value.trim().parse().map_err(|e| CliError::Usage(format!("invalid value '{value}' for {key}: {e}")))
}

pub fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(CliError::Usage(format!("invalid value '{value}' for {key}: expected true or false"))),
    }
}

pub fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(key, s)).collect()
}

impl EvalSettings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "episodes" => self.episodes = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "loss" => self.loss = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "coefficients" => self.coefficients = parse_list(key, value)?,
            "kernel_family" => self.kernel_family = parse(key, value)?,
            "share_zz_coefficient" => self.share_zz_coefficient = parse_bool(key, value)?,
            "normalize_features" => self.normalize_features = parse_bool(key, value)?,
            "rho" => self.rho = parse(key, value)?,
            "opt_eps" => self.opt_eps = parse(key, value)?,
            "n_max" => self.n_max = parse(key, value)?,
            "max_support" => self.max_support = parse(key, value)?,
            "max_query_per_class" => self.max_query_per_class = parse(key, value)?,
            "max_shots_per_class" => self.max_shots_per_class = parse(key, value)?,
            "ways" => self.ways = Some(parse(key, value)?),
            "shots" => self.shots = Some(parse(key, value)?),
            "queries" => self.queries = Some(parse(key, value)?),
            _ => return Err(CliError::Usage(format!("unknown config key '{key}' (known keys: {})", KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Applies a config file's contents. Blank lines and `#` comments are ignored.
    pub fn apply_file(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::Usage(format!("config line {}: {}", n + 1, e.message())))?;
        }
        Ok(())
    }

    pub fn adapt_config(&self) -> Result<AdaptConfig, CliError> {
        let config = AdaptConfig {
            loss: self.loss,
            gamma: self.gamma,
            learning_rate: self.learning_rate,
            steps: self.steps,
            weight_decay: self.weight_decay,
            grid: BandwidthGrid::new(self.coefficients.clone(), self.epsilon)?,
            kernel_family: self.kernel_family,
            share_zz_coefficient: self.share_zz_coefficient,
            normalize_features: self.normalize_features,
            optimizer: AdadeltaConfig { rho: self.rho, eps: self.opt_eps },
        };
        config.validate()?;
        Ok(config)
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig, CliError> {
        let mode = match (self.ways, self.shots, self.queries) {
            (None, None, None) => SamplingMode::VaryWayVaryShot,
            (Some(ways), Some(shots), Some(queries)) => SamplingMode::Fixed { ways, shots, queries },
            _ => return Err(CliError::Usage("ways, shots and queries must be given together".into())),
        };
        let config = SamplerConfig {
            n_max: self.n_max,
            max_support: self.max_support,
            max_query_per_class: self.max_query_per_class,
            max_shots_per_class: self.max_shots_per_class,
            seed: self.seed,
            mode,
        };
        config.validate()?;
        Ok(config)
    }
}
