//! Subcommand bodies, separate from argument parsing so tests can drive them.

use std::path::{Path, PathBuf};

use dpadapt::moments::{estimator_rounds, hat_metric, private_second_moment};
use dpadapt::privacy::{max_steps, noise_multiplier, noise_scale};
use dpadapt::problems::power_law_sigma;
use dpadapt::testkit::{
    fuzz_sum_inequality, verify_concentration, verify_projection_bias, verify_projection_suite,
    verify_truncation_bias, TailDist, VerifierReport,
};
use dpadapt::{Metric64, PrivacyBudget};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{AccountantConfig, EstimateConfig, ExperimentConfig, GenDataConfig, RunConfig};
use crate::error::{BenchError, Result};
use crate::experiment::{achieved_epsilon, generate, run_single, sweep};
use crate::io::{create_dir, read_dataset, read_results, write_dataset, write_json, write_rows, Sidecar};
use crate::report::{summarize, write_summary, Summary};
use crate::seeds::derive_seed;

pub fn gen_data(cfg: &GenDataConfig, out: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    create_dir(out)?;
    let sigma = power_law_sigma::<f64>(cfg.d, cfg.sigma_power);
    let data = generate(cfg.loss, cfg.n, &sigma, cfg.tau, cfg.seed)?;
    let path = out.join("data.csv");
    let sidecar = Sidecar {
        loss: cfg.loss,
        x_star: data.x_star.clone(),
        sigma: Some(sigma),
        tau: Some(cfg.tau),
        seed: Some(cfg.seed),
    };
    write_dataset(&path, &data, &sidecar)?;
    Ok(path)
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<crate::experiment::RunSummary> {
    let (trace, summary) = run_single(cfg)?;
    create_dir(out)?;
    write_rows(&out.join("trace.csv"), &trace.records)?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

pub fn sweep_to_dir(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    cfg.validate()?;
    let rows = sweep(cfg)?;
    create_dir(out)?;
    write_json(&out.join("config.json"), cfg)?;
    write_rows(&out.join("results.csv"), &rows)?;
    let summary = summarize(&rows, cfg.bootstrap_resamples, cfg.seed)?;
    write_summary(out, &summary)?;
    Ok(summary)
}

pub fn report(table: &Path, out: &Path, resamples: usize, seed: u64) -> Result<Summary> {
    let rows = read_results(table)?;
    if rows.is_empty() {
        return Err(BenchError::format(table, "result table has no rows"));
    }
    let summary = summarize(&rows, resamples, seed)?;
    write_summary(out, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateOutput {
    pub n: usize,
    pub d: usize,
    pub r: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub rounds: usize,
    pub sigma_hat: Vec<f64>,
    /// Diagonal of the plug-in clipping metric.
    pub c_hat: Vec<f64>,
}

pub fn estimate(cfg: &EstimateConfig) -> Result<EstimateOutput> {
    let (data, _) = read_dataset(&cfg.data)?;
    let budget = PrivacyBudget::new(cfg.epsilon, cfg.delta).map_err(|e| BenchError::config(e.to_string()))?;
    if !(cfg.r > 1.0 && cfg.r.is_finite()) {
        return Err(BenchError::config("r must be finite and > 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let est = private_second_moment(&data, cfg.r, &budget, &mut rng)?;
    let c = hat_metric(&est)?;
    Ok(EstimateOutput {
        n: data.n(),
        d: data.dim(),
        r: cfg.r,
        epsilon: cfg.epsilon,
        delta: cfg.delta,
        rounds: estimator_rounds(data.dim()),
        sigma_hat: est.sigma_hat,
        c_hat: c.entries().to_vec(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AccountantOutput {
    pub n: usize,
    pub batch: usize,
    pub steps: u64,
    pub delta: f64,
    pub scale: f64,
    /// Sampling rate `b/n`.
    pub q: f64,
    /// Noise multiplier relative to the replace-one sensitivity `2/b`.
    pub z: f64,
    /// `⌊n²/b²⌋`, the step count the noise calibration assumes at `c = 1`.
    pub max_steps: usize,
    pub epsilon: f64,
}

pub fn accountant(cfg: &AccountantConfig) -> Result<AccountantOutput> {
    if cfg.batch == 0 || cfg.n < cfg.batch || cfg.steps == 0 {
        return Err(BenchError::config("need 1 <= batch <= n and steps >= 1"));
    }
    let scale = match (cfg.scale, cfg.epsilon) {
        (Some(s), _) => s,
        (None, Some(e)) => {
            let b = PrivacyBudget::new(e, cfg.delta).map_err(|e| BenchError::config(e.to_string()))?;
            noise_scale(&b, cfg.batch)
        }
        (None, None) => return Err(BenchError::config("give either scale or epsilon")),
    };
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(BenchError::config("scale must be positive and finite"));
    }
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(BenchError::config("delta must lie in (0, 1)"));
    }
    let epsilon = achieved_epsilon(cfg.n, cfg.batch, cfg.steps as usize, scale, cfg.delta)?;
    Ok(AccountantOutput {
        n: cfg.n,
        batch: cfg.batch,
        steps: cfg.steps,
        delta: cfg.delta,
        scale,
        q: cfg.batch as f64 / cfg.n as f64,
        z: noise_multiplier(scale, cfg.batch),
        max_steps: max_steps(cfg.n, cfg.batch, 1.0)?,
        epsilon,
    })
}

fn tagged(mut r: VerifierReport, variant: &str) -> VerifierReport {
    r.name = format!("{}_{variant}", r.name);
    r
}

/// The Monte-Carlo lemma checks plus the projection invariants, each seeded
/// from `seed` and run in parallel.
pub fn lemma_suite(trials: u64, seed: u64) -> Result<Vec<VerifierReport>> {
    let sub = |name: &str| derive_seed(&[&seed.to_string(), name]);
    let c = Metric64::new(vec![1.0, 2.0, 0.5, 4.0])?;
    let scales = [1.0, 0.6, 0.8, 0.3];
    type Job<'a> = Box<dyn Fn() -> Result<Vec<VerifierReport>> + Send + Sync + 'a>;
    let jobs: Vec<Job> = vec![
        Box::new(|| Ok(verify_projection_suite(1000, 100, sub("projection"))?)),
        Box::new(|| Ok(vec![tagged(verify_projection_bias(TailDist::Gaussian, &scales, &c, 1.5, 2.0, trials, sub("bias_p2"))?, "gaussian_p2")])),
        Box::new(|| Ok(vec![tagged(verify_projection_bias(TailDist::Gaussian, &scales, &c, 2.5, 4.0, trials, sub("bias_p4"))?, "gaussian_p4")])),
        Box::new(|| Ok(vec![tagged(verify_projection_bias(TailDist::Uniform, &scales, &c, 1.0, 3.0, trials, sub("bias_unif"))?, "uniform_p3")])),
        Box::new(|| Ok(vec![fuzz_sum_inequality(10_000, sub("sum"))])),
        Box::new(|| Ok(vec![tagged(verify_truncation_bias(TailDist::Gaussian, 1.0, 2.0, trials, sub("trunc_gauss")), "gaussian")])),
        Box::new(|| Ok(vec![tagged(verify_truncation_bias(TailDist::Uniform, 0.5, 2.0, trials, sub("trunc_unif")), "uniform")])),
        Box::new(|| Ok(vec![tagged(verify_concentration(TailDist::Gaussian, 1.0, 2.0, 1000, 0.05, trials, sub("conc_gauss")), "gaussian")])),
        Box::new(|| Ok(vec![tagged(verify_concentration(TailDist::Rademacher, 0.5, 2.0, 100, 0.1, trials, sub("conc_rad")), "rademacher")])),
    ];
    let nested: Vec<Vec<VerifierReport>> = jobs.par_iter().map(|j| j()).collect::<std::result::Result<_, _>>()?;
    Ok(nested.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accountant_requires_scale_or_epsilon() {
        let cfg = AccountantConfig {
            n: 1000,
            batch: 10,
            steps: 100,
            scale: None,
            epsilon: None,
            delta: 1e-5,
        };
        assert!(matches!(accountant(&cfg), Err(BenchError::Config(_))));
        let out = accountant(&AccountantConfig { epsilon: Some(1.0), ..cfg }).unwrap();
        assert_eq!(out.q, 0.01);
        assert!(out.epsilon > 0.0 && out.epsilon.is_finite());
        assert_eq!(out.max_steps, 10_000);
    }

    #[test]
    fn small_lemma_suite_passes() {
        for r in lemma_suite(5_000, 1).unwrap() {
            assert!(r.passed, "{r:?}");
        }
    }
}
