//! Building problems from configs, single runs and the grid sweep.

use std::sync::Arc;

use dpadapt::moments::choose_metric;
use dpadapt::optimizers::Clipper;
use dpadapt::privacy::{account, max_steps, noise_scale};
use dpadapt::problems::{gen_abs_regression, gen_linear, power_law_sigma};
use dpadapt::{
    run, AccountantLedger, Algorithm, Dataset64, Domain, LossKind, Metric64, OptConfig64, PrivacyBudget, Problem64,
    Trace64,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ClipperChoice, DataSource, ExperimentConfig, MethodConfig, MetricChoice, ProblemConfig, RunConfig};
use crate::error::{BenchError, Result};
use crate::io::{read_dataset, ResultRow};
use crate::seeds::{data_seed, run_seed};

/// A problem plus the feature scales, when known.
#[derive(Debug, Clone)]
pub struct BuiltProblem {
    pub problem: Problem64,
    pub sigma: Option<Vec<f64>>,
}

pub fn generate(loss: LossKind, n: usize, sigma: &[f64], tau: f64, seed: u64) -> Result<Dataset64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match loss {
        LossKind::AbsRegression => gen_abs_regression(n, sigma, tau, &mut rng)?,
        LossKind::Linear => gen_linear(n, sigma, &mut rng)?,
    })
}

pub fn build_problem(cfg: &ProblemConfig, seed_base: u64) -> Result<BuiltProblem> {
    cfg.validate()?;
    let (data, sigma) = match &cfg.data {
        DataSource::Synthetic { n, d, sigma_power, tau, seed } => {
            let sigma = power_law_sigma::<f64>(*d, *sigma_power);
            let data = generate(cfg.loss, *n, &sigma, *tau, seed.unwrap_or_else(|| data_seed(seed_base)))?;
            (data, Some(sigma))
        }
        DataSource::Csv { path } => {
            let (data, side) = read_dataset(path)?;
            (data, side.and_then(|s| s.sigma))
        }
    };
    let domain = Domain::new(cfg.domain, cfg.radius, data.dim())?;
    let problem = Problem64::new(cfg.loss, Arc::new(data), domain).map_err(|e| BenchError::config(e.to_string()))?;
    Ok(BuiltProblem { problem, sigma })
}

/// Column root-mean-squares.
pub fn column_rms(data: &Dataset64) -> Vec<f64> {
    (0..data.dim())
        .map(|j| (data.column(j).map(|v| v * v).sum::<f64>() / data.n() as f64).sqrt())
        .collect()
}

pub fn resolve_metric(method: &MethodConfig, built: &BuiltProblem) -> Result<Metric64> {
    let d = built.problem.dim();
    match method.metric_choice() {
        MetricChoice::Identity => Ok(Metric64::identity(d)),
        MetricChoice::Optimal => {
            let sigma = built
                .sigma
                .as_ref()
                .ok_or_else(|| BenchError::config("metric \"optimal\" needs known feature scales (sidecar sigma)"))?;
            Ok(choose_metric(method.algorithm, sigma)?)
        }
        MetricChoice::Empirical => {
            let rms = column_rms(&built.problem.data);
            choose_metric(method.algorithm, &rms).map_err(|_| BenchError::config("a feature column is identically zero"))
        }
        MetricChoice::Diagonal(v) => {
            if v.len() != d {
                return Err(BenchError::config(format!("metric has {} entries, data has {d} features", v.len())));
            }
            Ok(Metric64::new(v)?)
        }
    }
}

/// Everything needed to launch one run apart from the seed.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub algorithm: Algorithm,
    pub metric: Metric64,
    pub clipper: ClipperChoice,
    pub stepsize: f64,
    pub clip_bound: Option<f64>,
    pub budget: Option<PrivacyBudget>,
    pub batch: usize,
    pub steps: usize,
    pub steps_constant: f64,
    pub eval_every: usize,
}

impl RunSpec {
    pub fn opt_config(&self, problem: &Problem64, seed: u64) -> OptConfig64 {
        let mut cfg = OptConfig64::new(problem.domain.clone(), self.batch, self.steps)
            .alpha(self.stepsize)
            .metric(self.metric.clone())
            .clip_bound(self.clip_bound)
            .budget(self.budget)
            .clipper(match self.clipper {
                ClipperChoice::Projection => Clipper::Projection,
                ClipperChoice::Radial => Clipper::Radial,
            })
            .seed(seed)
            .eval_every(self.eval_every);
        cfg.steps_constant = self.steps_constant;
        cfg
    }

    pub fn run(&self, problem: &Problem64, seed: u64) -> Result<Trace64> {
        Ok(run(self.algorithm, problem, &self.opt_config(problem, seed))?)
    }
}

pub fn resolve_steps(explicit: Option<usize>, n: usize, batch: usize, c: f64) -> Result<usize> {
    match explicit {
        Some(t) => Ok(t),
        None => Ok(max_steps(n, batch, c)?),
    }
}

/// `ε` reached at `delta` by `steps` Poisson-subsampled releases at this scale.
pub fn achieved_epsilon(n: usize, batch: usize, steps: usize, scale: f64, delta: f64) -> Result<f64> {
    let ledger = AccountantLedger::for_run(n, batch, steps as u64, scale)?;
    Ok(account(&ledger, delta)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub method: String,
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub stepsize: f64,
    pub clip_bound: Option<f64>,
    pub steps: usize,
    pub seed: u64,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub averaged_loss: f64,
    pub noise_scale: Option<f64>,
    /// Accountant's `ε` for the actual `(q, z, T)`; absent for non-private runs.
    pub accountant_epsilon: Option<f64>,
}

pub fn run_single(cfg: &RunConfig) -> Result<(Trace64, RunSummary)> {
    cfg.validate()?;
    let built = build_problem(&cfg.problem, cfg.seed)?;
    let p = &built.problem;
    let steps = resolve_steps(cfg.steps, p.n(), cfg.batch, cfg.steps_constant)?;
    let private = cfg.method.algorithm.is_private() && cfg.epsilon.is_some();
    let budget = match cfg.epsilon {
        Some(e) if cfg.method.algorithm.is_private() => Some(PrivacyBudget::new(e, cfg.delta)?),
        _ => None,
    };
    let spec = RunSpec {
        algorithm: cfg.method.algorithm,
        metric: resolve_metric(&cfg.method, &built)?,
        clipper: cfg.method.clipper.unwrap_or(ClipperChoice::Projection),
        stepsize: cfg.stepsize,
        clip_bound: cfg.clip_bound,
        budget,
        batch: cfg.batch,
        steps,
        steps_constant: cfg.steps_constant,
        eval_every: cfg.eval_every,
    };
    let trace = spec.run(p, cfg.seed)?;
    let scale = budget.map(|b| noise_scale(&b, cfg.batch));
    let accountant_epsilon = match scale {
        Some(s) if private => Some(achieved_epsilon(p.n(), cfg.batch, steps, s, cfg.delta)?),
        _ => None,
    };
    let summary = RunSummary {
        method: cfg.method.label(),
        epsilon: budget.map(|b| b.epsilon),
        delta: cfg.delta,
        stepsize: cfg.stepsize,
        clip_bound: cfg.clip_bound,
        steps,
        seed: cfg.seed,
        initial_loss: trace.initial_loss,
        final_loss: trace.final_loss(),
        averaged_loss: p.loss(&trace.x_bar)?,
        noise_scale: scale,
        accountant_epsilon,
    };
    Ok((trace, summary))
}

/// One `(method, ε, stepsize, B)` combination of the sweep.
#[derive(Debug, Clone)]
pub struct Cell {
    pub label: String,
    pub epsilon: f64,
    pub spec: RunSpec,
}

pub fn sweep_cells(cfg: &ExperimentConfig, built: &BuiltProblem) -> Result<Vec<Cell>> {
    cfg.validate()?;
    let steps = resolve_steps(cfg.steps, built.problem.n(), cfg.batch, cfg.steps_constant)?;
    let mut cells = Vec::new();
    for m in &cfg.methods {
        let metric = resolve_metric(m, built)?;
        let base = |stepsize: f64, clip_bound: Option<f64>, budget: Option<PrivacyBudget>| RunSpec {
            algorithm: m.algorithm,
            metric: metric.clone(),
            clipper: m.clipper.unwrap_or(ClipperChoice::Projection),
            stepsize,
            clip_bound,
            budget,
            batch: cfg.batch,
            steps,
            steps_constant: cfg.steps_constant,
            eval_every: cfg.eval_every,
        };
        if m.algorithm.is_private() {
            for &eps in &cfg.epsilons {
                let budget = PrivacyBudget::new(eps, cfg.delta)?;
                for &alpha in &cfg.stepsizes {
                    for &b in &cfg.clip_grid(m) {
                        cells.push(Cell {
                            label: m.label(),
                            epsilon: eps,
                            spec: base(alpha, Some(b), Some(budget)),
                        });
                    }
                }
            }
        } else {
            for &alpha in &cfg.stepsizes {
                cells.push(Cell {
                    label: m.label(),
                    epsilon: f64::INFINITY,
                    spec: base(alpha, None, None),
                });
            }
        }
    }
    Ok(cells)
}

fn trace_rows(cell: &Cell, rep: usize, seed: u64, trace: &Trace64) -> Vec<ResultRow> {
    trace
        .records
        .iter()
        .filter_map(|r| {
            r.loss.map(|loss| ResultRow {
                method: cell.label.clone(),
                epsilon: cell.epsilon,
                stepsize: cell.spec.stepsize,
                clip_bound: cell.spec.clip_bound,
                rep,
                seed,
                iteration: r.k,
                loss,
            })
        })
        .collect()
}

/// Runs every cell `repetitions` times in parallel and returns the rows in
/// cell, repetition, iteration order regardless of scheduling.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let built = build_problem(&cfg.problem, cfg.seed)?;
    let cells = sweep_cells(cfg, &built)?;
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.repetitions).map(move |r| (c, r)))
        .collect();
    log::info!("sweep: {} cells × {} repetitions", cells.len(), cfg.repetitions);
    let chunks: Vec<Vec<ResultRow>> = jobs
        .par_iter()
        .map(|&(c, rep)| {
            let cell = &cells[c];
            let seed = run_seed(cfg.seed, &cell.label, cell.epsilon, cell.spec.stepsize, rep);
            let trace = cell.spec.run(&built.problem, seed)?;
            Ok(trace_rows(cell, rep, seed, &trace))
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}
