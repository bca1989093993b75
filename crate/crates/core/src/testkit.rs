//! Independent oracles and seeded Monte-Carlo verifiers for the inequalities
//! the optimizers and the moment estimator rely on.
//!
//! Nothing in here calls into the production root finders except to compare
//! against them. Statistical checks use a three-standard-error slack and report
//! violation counts alongside the verdict.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::{erf::erf, gamma::ln_gamma};

use crate::error::{Error, Result};
use crate::geometry::{mahalanobis_norm, project_onto_ellipsoid, DiagonalMetric, DomainKind, Ellipsoid};
use crate::optimizers::{Algorithm, BatchSampler};
use crate::problems::ProblemSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierReport {
    pub name: String,
    pub trials: u64,
    pub violations: u64,
    /// Smallest slack `allowed − observed`; negative when the check fails.
    pub worst_margin: f64,
    pub passed: bool,
}

impl VerifierReport {
    fn new(name: &str, trials: u64, violations: u64, worst_margin: f64, passed: bool) -> Self {
        Self {
            name: name.to_string(),
            trials,
            violations,
            worst_margin,
            passed,
        }
    }
}

/// `π_A(x)` by plain bisection on the KKT multiplier down to a `1e−12`-wide
/// bracket. Meant for small `d`.
pub fn oracle_project(x: &[f64], a: &[f64]) -> Vec<f64> {
    let radius_sq = |lam: f64| -> f64 {
        x.iter()
            .zip(a)
            .map(|(xi, ai)| {
                let y = xi / (1.0 + lam * ai);
                ai * y * y
            })
            .sum()
    };
    if radius_sq(0.0) <= 1.0 {
        return x.to_vec();
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while radius_sq(hi) > 1.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if radius_sq(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    x.iter().zip(a).map(|(xi, ai)| xi / (1.0 + hi * ai)).collect()
}

fn random_instance(rng: &mut ChaCha8Rng, d: usize) -> (Vec<f64>, Vec<f64>) {
    let a: Vec<f64> = (0..d).map(|_| 10f64.powf(rng.random_range(-2.0..2.0))).collect();
    let scale = 10f64.powf(rng.random_range(-1.0..2.0));
    let x: Vec<f64> = (0..d).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    (x, a)
}

fn random_feasible(rng: &mut ChaCha8Rng, a: &[f64]) -> Vec<f64> {
    let dir: Vec<f64> = a.iter().map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm: f64 = dir.iter().zip(a).map(|(u, ai)| ai * u * u).sum::<f64>().sqrt();
    let radius = rng.random::<f64>().powf(1.0 / a.len() as f64);
    dir.iter().map(|u| u / norm * radius).collect()
}

/// Agreement of the production projection with [`oracle_project`] plus the
/// feasibility, idempotence, nonexpansiveness and variational-inequality
/// invariants, over `instances` random `(x, A)` pairs with `d ≤ 8`.
pub fn verify_projection_suite(instances: u64, feasible_per_instance: usize, seed: u64) -> Result<Vec<VerifierReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = crate::geometry::DEFAULT_PROJECTION_TOL;
    let mut agree = (0u64, f64::INFINITY);
    let mut feas = (0u64, f64::INFINITY);
    let mut idem = (0u64, f64::INFINITY);
    let mut nonexp = (0u64, f64::INFINITY);
    let mut vi = (0u64, f64::INFINITY);
    let bump = |acc: &mut (u64, f64), margin: f64| {
        if margin < 0.0 {
            acc.0 += 1;
        }
        acc.1 = acc.1.min(margin);
    };
    for _ in 0..instances {
        let d = rng.random_range(1..=8);
        let (x, a) = random_instance(&mut rng, d);
        let e = Ellipsoid::new(DiagonalMetric::new(a.clone())?);
        let y = project_onto_ellipsoid(&x, &e, tol)?;
        let o = oracle_project(&x, &a);
        let gap = y.iter().zip(&o).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        bump(&mut agree, 1e-6 - gap);

        let ny = mahalanobis_norm(&y, &e.metric)?;
        bump(&mut feas, 1.0 + tol - ny);

        let yy = project_onto_ellipsoid(&y, &e, tol)?;
        let drift = y.iter().zip(&yy).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        bump(&mut idem, tol - drift);

        let (x2, _) = random_instance(&mut rng, d);
        let y2 = project_onto_ellipsoid(&x2, &e, tol)?;
        let dy: f64 = y.iter().zip(&y2).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        let dx: f64 = x.iter().zip(&x2).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        bump(&mut nonexp, dx * (1.0 + 1e-9) + 1e-12 - dy);

        let residual: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u - v).collect();
        let rnorm = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
        for _ in 0..feasible_per_instance {
            let z = random_feasible(&mut rng, &a);
            let ip: f64 = residual.iter().zip(z.iter().zip(&y)).map(|(r, (zi, yi))| r * (zi - yi)).sum();
            // the root finder stops at |‖y‖_A − 1| ≤ tol, which perturbs the
            // inequality by O(tol · ‖x − y‖ · ‖z − y‖)
            let slack = 10.0 * tol * (1.0 + rnorm) * (1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max));
            bump(&mut vi, slack - ip);
        }
    }
    let vi_trials = instances * feasible_per_instance as u64;
    Ok(vec![
        VerifierReport::new("projection_oracle_agreement", instances, agree.0, agree.1, agree.0 == 0),
        VerifierReport::new("projection_feasibility", instances, feas.0, feas.1, feas.0 == 0),
        VerifierReport::new("projection_idempotence", instances, idem.0, idem.1, idem.0 == 0),
        VerifierReport::new("projection_nonexpansive", instances, nonexp.0, nonexp.1, nonexp.0 == 0),
        VerifierReport::new("projection_variational_inequality", vi_trials, vi.0, vi.1, vi.0 == 0),
    ])
}

/// Scalar distribution with a prescribed second moment `σ²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailDist {
    Gaussian,
    /// `±σ` with equal probability.
    Rademacher,
    /// Uniform on `[−σ√3, σ√3]`.
    Uniform,
}

impl TailDist {
    pub fn sample<R: Rng + ?Sized>(self, sigma: f64, rng: &mut R) -> f64 {
        match self {
            TailDist::Gaussian => sigma * rng.sample::<f64, _>(StandardNormal),
            TailDist::Rademacher => {
                if rng.random::<bool>() {
                    sigma
                } else {
                    -sigma
                }
            }
            TailDist::Uniform => sigma * 3f64.sqrt() * rng.random_range(-1.0..1.0),
        }
    }

    /// `E[min(z², Δ²)]` in closed form.
    pub fn truncated_second_moment(self, sigma: f64, delta: f64) -> f64 {
        match self {
            TailDist::Gaussian => {
                if sigma == 0.0 {
                    return 0.0;
                }
                let c = delta / sigma;
                let cdf_two_sided = erf(c / std::f64::consts::SQRT_2);
                let pdf = (-0.5 * c * c).exp() / (2.0 * std::f64::consts::PI).sqrt();
                sigma * sigma * (cdf_two_sided - 2.0 * c * pdf) + delta * delta * (1.0 - cdf_two_sided)
            }
            TailDist::Rademacher => (sigma * sigma).min(delta * delta),
            TailDist::Uniform => {
                let a = sigma * 3f64.sqrt();
                if delta >= a {
                    sigma * sigma
                } else {
                    delta.powi(3) / (3.0 * a) + (a - delta) * delta * delta / a
                }
            }
        }
    }

    /// `E|z|^p` for `σ = 1`.
    fn abs_moment(self, p: f64) -> f64 {
        match self {
            TailDist::Gaussian => (0.5 * p * 2f64.ln() + ln_gamma(0.5 * (p + 1.0)) - 0.5 * std::f64::consts::PI.ln()).exp(),
            TailDist::Rademacher => 1.0,
            TailDist::Uniform => 3f64.sqrt().powf(p) / (p + 1.0),
        }
    }
}

/// Analytic upper bound on `E[‖X‖_C^p]^{1/p}` for `X` with independent
/// coordinates `s_j · z_j` (exact for `p = 2`): Jensen below `p = 2`,
/// Minkowski in `L^{p/2}` above.
pub fn moment_norm_bound(dist: TailDist, scales: &[f64], c: &DiagonalMetric<f64>, p: f64) -> f64 {
    let w: f64 = scales.iter().zip(c.entries()).map(|(s, cj)| cj * s * s).sum();
    if p <= 2.0 {
        w.sqrt()
    } else {
        w.sqrt() * dist.abs_moment(p).powf(1.0 / p)
    }
}

/// Monte-Carlo check of `E‖π(X) − X‖_C ≤ G^p / ((p − 1) B^{p−1})`, where `π`
/// projects onto `{‖x‖_C ≤ B}`.
pub fn verify_projection_bias(
    dist: TailDist,
    scales: &[f64],
    c: &DiagonalMetric<f64>,
    bound_b: f64,
    p: f64,
    trials: u64,
    seed: u64,
) -> Result<VerifierReport> {
    let g = moment_norm_bound(dist, scales, c, p);
    let limit = g.powf(p) / ((p - 1.0) * bound_b.powf(p - 1.0));
    let e = Ellipsoid::from_clip(c, bound_b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..trials {
        let x: Vec<f64> = scales.iter().map(|&sj| dist.sample(sj, &mut rng)).collect();
        let y = project_onto_ellipsoid(&x, &e, crate::geometry::DEFAULT_PROJECTION_TOL)?;
        let r: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u - v).collect();
        let bias = mahalanobis_norm(&r, c)?;
        s += bias;
        s2 += bias * bias;
    }
    let n = trials as f64;
    let mean = s / n;
    let se = ((s2 / n - mean * mean).max(0.0) / n).sqrt();
    let margin = limit + 3.0 * se - mean;
    Ok(VerifierReport::new("projection_bias", trials, u64::from(margin < 0.0), margin, margin >= 0.0))
}

/// `Σ_k a_k² / ‖a_{1:k}‖₂ ≤ 2 ‖a_{1:n}‖₂`, skipping terms with a zero prefix.
pub fn verify_sum_inequality(seq: &[f64]) -> bool {
    sum_inequality_margin(seq) >= 0.0
}

fn sum_inequality_margin(seq: &[f64]) -> f64 {
    let mut prefix_sq = 0.0;
    let mut lhs = 0.0;
    for &a in seq {
        prefix_sq += a * a;
        if prefix_sq > 0.0 {
            lhs += a * a / prefix_sq.sqrt();
        }
    }
    let rhs = 2.0 * prefix_sq.sqrt();
    // relative rounding allowance for long sums
    rhs * (1.0 + 1e-12) - lhs
}

/// Fuzzes [`verify_sum_inequality`] with random sequences of mixed scale and sparsity.
pub fn fuzz_sum_inequality(cases: u64, seed: u64) -> VerifierReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..cases {
        let len = rng.random_range(1..200);
        let zero_p = rng.random_range(0.0..0.5);
        let seq: Vec<f64> = (0..len)
            .map(|_| {
                if rng.random::<f64>() < zero_p {
                    0.0
                } else {
                    10f64.powf(rng.random_range(-3.0..3.0)) * rng.sample::<f64, _>(StandardNormal)
                }
            })
            .collect();
        let m = sum_inequality_margin(&seq);
        let scale: f64 = seq.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        worst = worst.min(m / scale);
        if m < 0.0 {
            violations += 1;
        }
    }
    VerifierReport::new("sum_inequality", cases, violations, worst, violations == 0)
}

/// Monte-Carlo check that truncating `z²` at `Δ² = (4 r σ ln r)²` moves its
/// mean by at most `σ²/8`.
pub fn verify_truncation_bias(dist: TailDist, sigma: f64, r: f64, trials: u64, seed: u64) -> VerifierReport {
    let delta = 4.0 * r * sigma * r.ln();
    verify_truncation_bias_at(dist, sigma, delta, trials, seed)
}

pub fn verify_truncation_bias_at(dist: TailDist, sigma: f64, delta: f64, trials: u64, seed: u64) -> VerifierReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = delta * delta;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..trials {
        let z = dist.sample(sigma, &mut rng);
        let t = (z * z).min(cap);
        s += t;
        s2 += t * t;
    }
    let n = trials as f64;
    let mean = s / n;
    let se = ((s2 / n - mean * mean).max(0.0) / n).sqrt();
    let margin = sigma * sigma / 8.0 + 3.0 * se - (mean - sigma * sigma).abs();
    VerifierReport::new("truncation_bias", trials, u64::from(margin < 0.0), margin, margin >= 0.0)
}

/// Frequency with which the truncated empirical second moment of `n` draws
/// deviates from its mean by more than `2 r² σ² sqrt(ln(2/β)) / √n`; passes
/// when it is at most `β` plus three binomial standard errors.
pub fn verify_concentration(dist: TailDist, sigma: f64, r: f64, n: usize, beta: f64, trials: u64, seed: u64) -> VerifierReport {
    let delta = 4.0 * r * sigma * r.ln().max(1.0);
    let cap = delta * delta;
    let expected = dist.truncated_second_moment(sigma, delta);
    let radius = 2.0 * r * r * sigma * sigma * (2.0 / beta).ln().sqrt() / (n as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0u64;
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let mean = (0..n)
            .map(|_| {
                let z = dist.sample(sigma, &mut rng);
                (z * z).min(cap)
            })
            .sum::<f64>()
            / n as f64;
        let m = radius - (mean - expected).abs();
        worst = worst.min(m);
        if m < 0.0 {
            violations += 1;
        }
    }
    let t = trials as f64;
    let allowed = beta + 3.0 * (beta * (1.0 - beta) / t).sqrt();
    let freq = violations as f64 / t;
    VerifierReport::new("concentration", trials, violations, worst, freq <= allowed)
}

/// Non-private regret terms from the recorded batch gradients:
/// `R_std = (1/T) sqrt(Σ_k ‖g^k‖²)` and `R_ada = (1/T) Σ_j sqrt(Σ_k (g^k_j)²)`.
pub fn regret_terms(true_grads: &[Vec<f64>]) -> (f64, f64) {
    if true_grads.is_empty() {
        return (0.0, 0.0);
    }
    let t = true_grads.len() as f64;
    let d = true_grads[0].len();
    let mut per_coord = vec![0.0; d];
    for g in true_grads {
        for (acc, v) in per_coord.iter_mut().zip(g) {
            *acc += v * v;
        }
    }
    let r_std = per_coord.iter().sum::<f64>().sqrt() / t;
    let r_ada = per_coord.iter().map(|s| s.sqrt()).sum::<f64>() / t;
    (r_std, r_ada)
}

/// Iterates `x^1..x^T` and their running average from [`reference_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrace {
    pub iterates: Vec<Vec<f64>>,
    pub x_bar: Vec<f64>,
}

/// Plain loops for the non-private baselines on a box domain, written
/// without the production step states.
pub fn reference_run(
    algorithm: Algorithm,
    problem: &ProblemSpec<f64>,
    alpha: f64,
    batch: usize,
    steps: usize,
    seed: u64,
) -> Result<ReferenceTrace> {
    if problem.domain.kind != DomainKind::InfinityBox {
        return Err(Error::invalid("domain", "reference loops only handle boxes"));
    }
    let radius = problem.domain.radius;
    let d = problem.dim();
    let mut x = vec![0.0; d];
    let mut avg = vec![0.0; d];
    let mut coord = vec![0.0; d];
    let mut total = 0.0;
    let mut iterates = Vec::with_capacity(steps);
    let mut sampler = BatchSampler::new(seed, problem.n(), batch);
    for k in 1..=steps {
        let idx = sampler.next_batch();
        let (_, grads) = problem.loss_and_subgrad(&x, &idx)?;
        let mut g = vec![0.0; d];
        for gi in &grads {
            for (a, v) in g.iter_mut().zip(gi) {
                *a += v;
            }
        }
        g.iter_mut().for_each(|v| *v /= grads.len() as f64);
        match algorithm {
            Algorithm::Sgd => {
                total += g.iter().map(|v| v * v).sum::<f64>();
                if total > 0.0 {
                    let eta = alpha / total.sqrt();
                    for (xj, gj) in x.iter_mut().zip(&g) {
                        *xj = (*xj - eta * gj).clamp(-radius, radius);
                    }
                }
            }
            Algorithm::Adagrad => {
                for j in 0..d {
                    coord[j] += g[j] * g[j];
                    if coord[j] > 0.0 {
                        x[j] = (x[j] - alpha * g[j] / coord[j].sqrt()).clamp(-radius, radius);
                    }
                }
            }
            other => return Err(Error::invalid("algorithm", format!("no reference loop for {}", other.name()))),
        }
        for (a, xj) in avg.iter_mut().zip(&x) {
            *a += (xj - *a) / k as f64;
        }
        iterates.push(x.clone());
    }
    Ok(ReferenceTrace { iterates, x_bar: avg })
}
