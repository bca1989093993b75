use std::collections::HashSet;
use std::path::{Path, PathBuf};

use dpadapt::{Algorithm, DomainKind, LossKind};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{BenchError, Result};

fn default_power() -> f64 {
    1.5
}
fn default_tau() -> f64 {
    0.01
}
fn default_one() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    1e-5
}
fn default_eval_every() -> usize {
    1
}
fn default_resamples() -> usize {
    1000
}
fn default_loss() -> LossKind {
    LossKind::AbsRegression
}
fn default_domain() -> DomainKind {
    DomainKind::InfinityBox
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| BenchError::config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Generated in memory with `σ_j = j^{−sigma_power}`.
    Synthetic {
        n: usize,
        d: usize,
        #[serde(default = "default_power")]
        sigma_power: f64,
        #[serde(default = "default_tau")]
        tau: f64,
        /// Defaults to a seed derived from the experiment seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    /// A dataset written by `gen-data` (or any CSV in the same layout).
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub data: DataSource,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default = "default_domain")]
    pub domain: DomainKind,
    #[serde(default = "default_one")]
    pub radius: f64,
}

/// Where the clipping metric `C` comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricChoice {
    Identity,
    /// `σ^{−4/3}` (PAGAN) or `σ^{−1}` (PASAN) from the known feature scales.
    Optimal,
    /// Same rule with `σ` taken as the column root-mean-squares of the data.
    Empirical,
    Diagonal(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipperChoice {
    Projection,
    Radial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub algorithm: Algorithm,
    /// Label in the result table; defaults to the algorithm name.
    #[serde(default)]
    pub label: Option<String>,
    /// Defaults to `optimal` for PASAN/PAGAN and `identity` otherwise.
    #[serde(default)]
    pub metric: Option<MetricChoice>,
    #[serde(default)]
    pub clipper: Option<ClipperChoice>,
    /// Overrides the experiment-wide clipping grid for this method.
    #[serde(default)]
    pub clip_bounds: Option<Vec<f64>>,
}

impl MethodConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            label: None,
            metric: None,
            clipper: None,
            clip_bounds: None,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.algorithm.name().to_string())
    }

    pub fn metric_choice(&self) -> MetricChoice {
        self.metric.clone().unwrap_or(match self.algorithm {
            Algorithm::Pasan | Algorithm::Pagan => MetricChoice::Optimal,
            _ => MetricChoice::Identity,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub methods: Vec<MethodConfig>,
    /// Privacy levels. Non-private methods run once and are recorded with
    /// `epsilon = inf`.
    pub epsilons: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub stepsizes: Vec<f64>,
    #[serde(default)]
    pub clip_bounds: Vec<f64>,
    pub batch: usize,
    /// Defaults to `⌊c n² / b²⌋` with `c = steps_constant`.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default = "default_one")]
    pub steps_constant: f64,
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(BenchError::config(format!("{name} must be nonempty")));
    }
    if grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(BenchError::config(format!("{name} entries must be positive and finite")));
    }
    Ok(())
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(BenchError::config("problem.radius must be positive and finite"));
        }
        if let DataSource::Synthetic { n, d, sigma_power, tau, .. } = &self.data {
            if *n == 0 || *d == 0 {
                return Err(BenchError::config("synthetic data needs n >= 1 and d >= 1"));
            }
            if !sigma_power.is_finite() || !(*tau >= 0.0 && tau.is_finite()) {
                return Err(BenchError::config("sigma_power must be finite and tau >= 0"));
            }
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        if self.methods.is_empty() {
            return Err(BenchError::config("methods must be nonempty"));
        }
        let mut labels = HashSet::new();
        for m in &self.methods {
            if !labels.insert(m.label()) {
                return Err(BenchError::config(format!("duplicate method label {}", m.label())));
            }
            if m.algorithm.is_private() {
                match &m.clip_bounds {
                    Some(g) => check_grid("method clip_bounds", g)?,
                    None => check_grid("clip_bounds", &self.clip_bounds)?,
                }
            }
            if let Some(MetricChoice::Diagonal(v)) = &m.metric {
                check_grid("metric.diagonal", v)?;
            }
        }
        check_grid("epsilons", &self.epsilons)?;
        check_grid("stepsizes", &self.stepsizes)?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(BenchError::config("delta must lie in (0, 1)"));
        }
        if self.batch == 0 {
            return Err(BenchError::config("batch must be positive"));
        }
        if self.repetitions == 0 {
            return Err(BenchError::config("repetitions must be at least 1"));
        }
        if self.steps == Some(0) {
            return Err(BenchError::config("steps must be positive"));
        }
        if !(self.steps_constant > 0.0) {
            return Err(BenchError::config("steps_constant must be positive"));
        }
        Ok(())
    }

    pub fn clip_grid(&self, m: &MethodConfig) -> Vec<f64> {
        m.clip_bounds.clone().unwrap_or_else(|| self.clip_bounds.clone())
    }
}

/// A single optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub method: MethodConfig,
    /// Omit for a non-private run.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub stepsize: f64,
    #[serde(default)]
    pub clip_bound: Option<f64>,
    pub batch: usize,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default = "default_one")]
    pub steps_constant: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        check_grid("stepsize", &[self.stepsize])?;
        if let Some(e) = self.epsilon {
            check_grid("epsilon", &[e])?;
            if self.method.algorithm.is_private() && self.clip_bound.is_none() {
                return Err(BenchError::config("a private run needs clip_bound"));
            }
        }
        if let Some(b) = self.clip_bound {
            check_grid("clip_bound", &[b])?;
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(BenchError::config("delta must lie in (0, 1)"));
        }
        if self.batch == 0 || self.steps == Some(0) {
            return Err(BenchError::config("batch and steps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataConfig {
    pub n: usize,
    pub d: usize,
    #[serde(default = "default_power")]
    pub sigma_power: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default)]
    pub seed: u64,
}

impl GenDataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(BenchError::config("n and d must be positive"));
        }
        if !self.sigma_power.is_finite() || !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(BenchError::config("sigma_power must be finite and tau >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub data: PathBuf,
    #[serde(default = "default_ratio")]
    pub r: f64,
    #[serde(default = "default_one")]
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_ratio() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountantConfig {
    pub n: usize,
    pub batch: usize,
    pub steps: u64,
    /// Noise scale `s` of `s·ξ`, `ξ ~ N(0, A⁻¹)`. If absent it is computed
    /// from `epsilon`.
    #[serde(default)]
    pub scale: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
}
