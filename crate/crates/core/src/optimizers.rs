//! PASAN (adaptive-stepsize SGD) and PAGAN (diagonal AdaGrad) with
//! ellipsoid-clipped, anisotropically noised gradients, plus the isotropic
//! DP-SGD and non-private baselines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{
    project_domain, project_onto_ellipsoid, radial_clip, DiagonalMetric, Domain, Ellipsoid,
    DEFAULT_PROJECTION_TOL,
};
use crate::privacy::{max_steps, noise_scale, sample_noise, NoiseSpec, PrivacyBudget};
use crate::problems::ProblemSpec;
use crate::scalar::{norm2, norm2_sq, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Private adaptive-stepsize SGD with ellipsoid noise.
    Pasan,
    /// Private diagonal AdaGrad with ellipsoid noise.
    Pagan,
    /// Isotropic ℓ2 clipping at `B`, `N(0, B² I)` noise, stepsize `α/√(k+1)`.
    DpsgdIsotropic,
    /// Non-private adaptive-stepsize SGD.
    Sgd,
    /// Non-private diagonal AdaGrad.
    Adagrad,
}

impl Algorithm {
    pub fn is_private(self) -> bool {
        matches!(self, Algorithm::Pasan | Algorithm::Pagan | Algorithm::DpsgdIsotropic)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Pasan => "pasan",
            Algorithm::Pagan => "pagan",
            Algorithm::DpsgdIsotropic => "dpsgd_isotropic",
            Algorithm::Sgd => "sgd",
            Algorithm::Adagrad => "adagrad",
        }
    }
}

/// How per-example gradients are brought inside the clipping set.
#[derive(Debug, Clone, PartialEq)]
pub enum Clipper<T: Scalar> {
    /// Euclidean projection onto `E_A`.
    Projection,
    /// Radial rescaling onto `E_A`.
    Radial,
    /// Clamp coordinate `j` to `[−λ_j, λ_j]`; noise std `ρ λ_j / (b ε_j)`.
    Coordinate { lambda: Vec<T>, rho: T },
}

#[derive(Debug, Clone)]
pub struct OptConfig<T: Scalar> {
    /// Stepsize multiplier `α`.
    pub alpha: T,
    /// The `C` of `A = C / B²`.
    pub metric: DiagonalMetric<T>,
    /// `None` means no clipping.
    pub clip_bound: Option<T>,
    pub batch: usize,
    pub steps: usize,
    pub budget: Option<PrivacyBudget>,
    pub clipper: Clipper<T>,
    pub domain: Domain<T>,
    pub seed: u64,
    pub x0: Option<Vec<T>>,
    /// Evaluate the full loss every this many steps (the last step is always
    /// evaluated). Zero disables per-step evaluation.
    pub eval_every: usize,
    pub record_iterates: bool,
    pub record_true_grads: bool,
    pub projection_tol: T,
    /// Constant in `T ≤ c n² / b²`, only used for the budget warning.
    pub steps_constant: f64,
}

impl<T: Scalar> OptConfig<T> {
    /// Non-private, unclipped configuration with identity metric.
    pub fn new(domain: Domain<T>, batch: usize, steps: usize) -> Self {
        Self {
            alpha: T::one(),
            metric: DiagonalMetric::identity(domain.dim),
            clip_bound: None,
            batch,
            steps,
            budget: None,
            clipper: Clipper::Projection,
            domain,
            seed: 0,
            x0: None,
            eval_every: 1,
            record_iterates: false,
            record_true_grads: false,
            projection_tol: T::lit(DEFAULT_PROJECTION_TOL),
            steps_constant: 1.0,
        }
    }

    pub fn alpha(mut self, alpha: T) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn metric(mut self, metric: DiagonalMetric<T>) -> Self {
        self.metric = metric;
        self
    }

    pub fn clip_bound(mut self, bound: Option<T>) -> Self {
        self.clip_bound = bound;
        self
    }

    pub fn budget(mut self, budget: Option<PrivacyBudget>) -> Self {
        self.budget = budget;
        self
    }

    pub fn clipper(mut self, clipper: Clipper<T>) -> Self {
        self.clipper = clipper;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn x0(mut self, x0: Vec<T>) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn eval_every(mut self, every: usize) -> Self {
        self.eval_every = every;
        self
    }

    pub fn record_iterates(mut self, on: bool) -> Self {
        self.record_iterates = on;
        self
    }

    pub fn record_true_grads(mut self, on: bool) -> Self {
        self.record_true_grads = on;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero() && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", "must be positive and finite"));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch", "must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps", "must be positive"));
        }
        if let Some(b) = self.clip_bound {
            if !(b > T::zero() && b.is_finite()) {
                return Err(Error::invalid("clip_bound", "must be positive and finite"));
            }
        }
        check_dim(self.domain.dim, self.metric.dim())
    }
}

/// One record per iteration `k = 1..=T`, describing the step that produced `x^k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord<T: Scalar> {
    pub k: usize,
    /// `f(x^k; S)`, when evaluated at this step.
    pub loss: Option<T>,
    /// `‖ĝ^{k−1}‖₂`
    pub grad_norm: T,
    /// Fraction of the batch whose gradient was moved by the clipper.
    pub clip_fraction: T,
    /// Scalar stepsize (PASAN/SGD) or mean per-coordinate stepsize (PAGAN/AdaGrad).
    pub step_size: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace<T: Scalar> {
    pub algorithm: Algorithm,
    pub initial_loss: Option<T>,
    pub records: Vec<StepRecord<T>>,
    /// `x̄^T = (1/T) Σ_{k=1}^T x^k`
    pub x_bar: Vec<T>,
    pub x_final: Vec<T>,
    /// `x^1..x^T`, when requested.
    pub iterates: Option<Vec<Vec<T>>>,
    /// Unclipped, noiseless batch-mean subgradients `g^0..g^{T−1}`, when requested.
    pub true_grads: Option<Vec<Vec<T>>>,
    /// Privatized gradients `ĝ^0..ĝ^{T−1}`, when iterates are requested.
    pub private_grads: Option<Vec<Vec<T>>>,
}

impl<T: Scalar> Trace<T> {
    pub fn final_loss(&self) -> Option<T> {
        self.records.last().and_then(|r| r.loss)
    }
}

fn update_avg<T: Scalar>(avg: &mut [T], x: &[T], k: usize) {
    let w = T::from_usize(k).unwrap().recip();
    avg.iter_mut().zip(x).for_each(|(a, &v)| *a = *a + (v - *a) * w);
}

/// State of the PASAN / adaptive SGD iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PasanState<T: Scalar> {
    pub x: Vec<T>,
    /// `Σ_{i ≤ k} ‖ĝ^i‖₂²`
    pub sq_accum: T,
    pub k: usize,
    pub avg: Vec<T>,
}

impl<T: Scalar> PasanState<T> {
    pub fn new(x0: Vec<T>) -> Self {
        let d = x0.len();
        Self {
            x: x0,
            sq_accum: T::zero(),
            k: 0,
            avg: vec![T::zero(); d],
        }
    }

    /// `x ← Π_X(x − α/√(Σ‖ĝ‖²) · ĝ)` with the current gradient included in the
    /// sum. Returns the stepsize; it is zero while the accumulator is zero.
    pub fn step(&mut self, ghat: &[T], alpha: T, domain: &Domain<T>) -> Result<T> {
        check_dim(self.x.len(), ghat.len())?;
        self.sq_accum = self.sq_accum + norm2_sq(ghat);
        let eta = if self.sq_accum > T::zero() {
            alpha / self.sq_accum.sqrt()
        } else {
            T::zero()
        };
        if eta > T::zero() {
            let moved: Vec<T> = self.x.iter().zip(ghat).map(|(&x, &g)| x - eta * g).collect();
            self.x = project_domain(&moved, domain, &DiagonalMetric::identity(domain.dim))?;
        }
        self.k += 1;
        update_avg(&mut self.avg, &self.x, self.k);
        Ok(eta)
    }
}

/// State of the PAGAN / diagonal AdaGrad iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PaganState<T: Scalar> {
    pub x: Vec<T>,
    /// `Σ_{i ≤ k} (ĝ^i_j)²`
    pub coord_accum: Vec<T>,
    pub k: usize,
    pub avg: Vec<T>,
}

impl<T: Scalar> PaganState<T> {
    pub fn new(x0: Vec<T>) -> Self {
        let d = x0.len();
        Self {
            x: x0,
            coord_accum: vec![T::zero(); d],
            k: 0,
            avg: vec![T::zero(); d],
        }
    }

    /// Diagonal of `H_k = diag(Σ ĝĝᵀ)^{1/2} / α`.
    pub fn preconditioner(&self, alpha: T) -> Vec<T> {
        self.coord_accum.iter().map(|&s| s.sqrt() / alpha).collect()
    }

    /// `x ← Π_X^{H}(x − H⁻¹ ĝ)` with `H` updated first. Coordinates whose
    /// accumulator is still zero do not move. Returns the mean stepsize
    /// `α/√accum_j` over the active coordinates.
    pub fn step(&mut self, ghat: &[T], alpha: T, domain: &Domain<T>) -> Result<T> {
        check_dim(self.x.len(), ghat.len())?;
        for (s, &g) in self.coord_accum.iter_mut().zip(ghat) {
            *s = *s + g * g;
        }
        let h = self.preconditioner(alpha);
        let mut active = 0usize;
        let mut step_sum = T::zero();
        let moved: Vec<T> = self
            .x
            .iter()
            .zip(ghat)
            .zip(&h)
            .map(|((&x, &g), &hj)| {
                if hj > T::zero() {
                    active += 1;
                    step_sum = step_sum + hj.recip();
                    x - g / hj
                } else {
                    x
                }
            })
            .collect();
        if active > 0 {
            // zero-weight coordinates are given the smallest active weight so
            // that the H-norm is a valid metric for the projection
            let floor = h.iter().copied().filter(|v| *v > T::zero()).fold(T::infinity(), T::min);
            let hm = DiagonalMetric::new(h.iter().map(|&v| if v > T::zero() { v } else { floor }).collect())?;
            self.x = project_domain(&moved, domain, &hm)?;
        }
        self.k += 1;
        update_avg(&mut self.avg, &self.x, self.k);
        Ok(if active > 0 {
            step_sum / T::from_usize(active).unwrap()
        } else {
            T::zero()
        })
    }
}

/// Projected SGD with the fixed schedule `α / √(k+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayingSgdState<T: Scalar> {
    pub x: Vec<T>,
    pub k: usize,
    pub avg: Vec<T>,
}

impl<T: Scalar> DecayingSgdState<T> {
    pub fn new(x0: Vec<T>) -> Self {
        let d = x0.len();
        Self {
            x: x0,
            k: 0,
            avg: vec![T::zero(); d],
        }
    }

    pub fn step(&mut self, ghat: &[T], alpha: T, domain: &Domain<T>) -> Result<T> {
        check_dim(self.x.len(), ghat.len())?;
        let eta = alpha / T::from_usize(self.k + 1).unwrap().sqrt();
        let moved: Vec<T> = self.x.iter().zip(ghat).map(|(&x, &g)| x - eta * g).collect();
        self.x = project_domain(&moved, domain, &DiagonalMetric::identity(domain.dim))?;
        self.k += 1;
        update_avg(&mut self.avg, &self.x, self.k);
        Ok(eta)
    }
}

/// Draws batches of indices uniformly with replacement.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    rng: ChaCha8Rng,
    n: usize,
    batch: usize,
}

impl BatchSampler {
    pub fn new(seed: u64, n: usize, batch: usize) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            n,
            batch,
        }
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        (0..self.batch).map(|_| self.rng.random_range(0..self.n)).collect()
    }
}

/// Noise stream for a run, decorrelated from the batch stream of the same seed.
pub fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn batch_mean<T: Scalar>(vs: &[Vec<T>]) -> Vec<T> {
    let d = vs[0].len();
    let inv = T::from_usize(vs.len()).unwrap().recip();
    let mut m = vec![T::zero(); d];
    for v in vs {
        m.iter_mut().zip(v).for_each(|(a, &b)| *a = *a + b);
    }
    m.iter_mut().for_each(|a| *a = *a * inv);
    m
}

/// Clips each gradient into `E_A` and returns the mean and the number of
/// gradients that had to be moved.
fn clip_mean<T: Scalar>(
    grads: &[Vec<T>],
    ellipsoid: &Ellipsoid<T>,
    radial: bool,
    tol: T,
) -> Result<(Vec<T>, usize)> {
    if grads.is_empty() {
        return Err(Error::invalid("per_example_grads", "batch must be nonempty"));
    }
    let mut moved = 0;
    let clipped = grads
        .iter()
        .map(|g| {
            check_dim(ellipsoid.dim(), g.len())?;
            if !ellipsoid.contains(g)? {
                moved += 1;
            }
            if radial {
                radial_clip(g, ellipsoid)
            } else {
                project_onto_ellipsoid(g, ellipsoid, tol)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((batch_mean(&clipped), moved))
}

/// `(1/b) Σ π_A(g_i) + scale · ξ`, `ξ ~ N(0, A⁻¹)` where `A` is the ellipsoid's metric.
pub fn privatize_gradient<T: Scalar, R: Rng + ?Sized>(
    per_example_grads: &[Vec<T>],
    ellipsoid: &Ellipsoid<T>,
    spec: &NoiseSpec<T>,
    rng: &mut R,
) -> Result<Vec<T>> {
    check_dim(ellipsoid.dim(), spec.metric.dim())?;
    let (mut g, _) = clip_mean(per_example_grads, ellipsoid, false, T::lit(DEFAULT_PROJECTION_TOL))?;
    add_noise(&mut g, spec, rng);
    Ok(g)
}

fn add_noise<T: Scalar, R: Rng + ?Sized>(g: &mut [T], spec: &NoiseSpec<T>, rng: &mut R) {
    let xi = sample_noise(spec, rng);
    g.iter_mut().zip(xi).for_each(|(a, b)| *a = *a + b);
}

/// Per-coordinate privacy split `ε_j = ε λ_j^{1/3} / sqrt(Σ λ_k^{2/3})`, so that `Σ ε_j² = ε²`.
pub fn coordinate_epsilon_split<T: Scalar>(lambda: &[T], epsilon: T) -> Result<Vec<T>> {
    if lambda.iter().any(|l| !(*l > T::zero() && l.is_finite())) {
        return Err(Error::invalid("lambda", "entries must be positive and finite"));
    }
    let third = T::lit(1.0 / 3.0);
    let norm = lambda.iter().map(|&l| l.powf(third + third)).sum::<T>().sqrt();
    Ok(lambda.iter().map(|&l| epsilon * l.powf(third) / norm).collect())
}

/// Coordinate-wise mechanism: coordinate `j` is the batch mean of
/// `clamp(g_ij, ±λ_j)` plus Gaussian noise of std `ρ λ_j / (b ε_j)`.
pub fn coordinate_wise_privatize<T: Scalar, R: Rng + ?Sized>(
    per_example_grads: &[Vec<T>],
    lambda: &[T],
    rho: T,
    epsilon_split: &[T],
    batch: usize,
    rng: &mut R,
) -> Result<Vec<T>> {
    let (mut g, _) = coordinate_clip_mean(per_example_grads, lambda)?;
    check_dim(lambda.len(), epsilon_split.len())?;
    if epsilon_split.iter().any(|e| !(*e > T::zero())) {
        return Err(Error::invalid("epsilon_split", "every ε_j must be positive"));
    }
    if rho > T::zero() {
        let b = T::from_usize(batch).unwrap();
        for ((gj, &lj), &ej) in g.iter_mut().zip(lambda).zip(epsilon_split) {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            *gj = *gj + rho * lj / (b * ej) * T::lit(z);
        }
    }
    Ok(g)
}

fn coordinate_clip_mean<T: Scalar>(grads: &[Vec<T>], lambda: &[T]) -> Result<(Vec<T>, usize)> {
    if grads.is_empty() {
        return Err(Error::invalid("per_example_grads", "batch must be nonempty"));
    }
    let mut moved = 0;
    let clipped = grads
        .iter()
        .map(|g| {
            check_dim(lambda.len(), g.len())?;
            let mut hit = false;
            let c = g
                .iter()
                .zip(lambda)
                .map(|(&v, &l)| {
                    if v.abs() > l {
                        hit = true;
                    }
                    v.max(-l).min(l)
                })
                .collect();
            if hit {
                moved += 1;
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((batch_mean(&clipped), moved))
}

enum Privatizer<T: Scalar> {
    None,
    Ellipsoid {
        ellipsoid: Ellipsoid<T>,
        radial: bool,
        noise: NoiseSpec<T>,
    },
    Coordinate {
        lambda: Vec<T>,
        rho: T,
        split: Option<Vec<T>>,
    },
}

fn build_privatizer<T: Scalar>(algorithm: Algorithm, cfg: &OptConfig<T>) -> Result<Privatizer<T>> {
    let d = cfg.domain.dim;
    let scale = match cfg.budget {
        Some(b) => {
            let s = noise_scale(&b, cfg.batch);
            if !(s > 0.0) {
                return Err(Error::invalid("budget", "noise scale computes to zero; use no budget for non-private runs"));
            }
            Some(T::lit(s))
        }
        None => None,
    };
    match algorithm {
        Algorithm::Sgd | Algorithm::Adagrad => Ok(Privatizer::None),
        Algorithm::DpsgdIsotropic => match cfg.clip_bound {
            None if scale.is_some() => Err(Error::invalid("clip_bound", "a private run needs a finite clipping bound")),
            None => Ok(Privatizer::None),
            Some(b) => {
                let e = Ellipsoid::from_clip(&DiagonalMetric::identity(d), b)?;
                Ok(Privatizer::Ellipsoid {
                    noise: NoiseSpec::new(scale.unwrap_or(T::zero()), e.metric.clone(), cfg.batch)?,
                    ellipsoid: e,
                    radial: false,
                })
            }
        },
        Algorithm::Pasan | Algorithm::Pagan => match &cfg.clipper {
            Clipper::Coordinate { lambda, rho } => {
                check_dim(d, lambda.len())?;
                let split = match cfg.budget {
                    Some(b) => Some(coordinate_epsilon_split(lambda, T::lit(b.epsilon))?),
                    None => None,
                };
                Ok(Privatizer::Coordinate {
                    lambda: lambda.clone(),
                    rho: *rho,
                    split,
                })
            }
            clipper => match cfg.clip_bound {
                None if scale.is_some() => Err(Error::invalid("clip_bound", "a private run needs a finite clipping bound")),
                None => Ok(Privatizer::None),
                Some(b) => {
                    let e = Ellipsoid::from_clip(&cfg.metric, b)?;
                    Ok(Privatizer::Ellipsoid {
                        noise: NoiseSpec::new(scale.unwrap_or(T::zero()), e.metric.clone(), cfg.batch)?,
                        ellipsoid: e,
                        radial: matches!(clipper, Clipper::Radial),
                    })
                }
            },
        },
    }
}

enum StepState<T: Scalar> {
    Adaptive(PasanState<T>),
    Diagonal(PaganState<T>),
    Decaying(DecayingSgdState<T>),
}

impl<T: Scalar> StepState<T> {
    fn step(&mut self, g: &[T], alpha: T, domain: &Domain<T>) -> Result<T> {
        match self {
            StepState::Adaptive(s) => s.step(g, alpha, domain),
            StepState::Diagonal(s) => s.step(g, alpha, domain),
            StepState::Decaying(s) => s.step(g, alpha, domain),
        }
    }

    fn x(&self) -> &[T] {
        match self {
            StepState::Adaptive(s) => &s.x,
            StepState::Diagonal(s) => &s.x,
            StepState::Decaying(s) => &s.x,
        }
    }

    fn avg(&self) -> &[T] {
        match self {
            StepState::Adaptive(s) => &s.avg,
            StepState::Diagonal(s) => &s.avg,
            StepState::Decaying(s) => &s.avg,
        }
    }
}

/// Runs `cfg.steps` iterations of `algorithm` on `problem`.
///
/// Batches come from a [`BatchSampler`] seeded with `cfg.seed`; noise from
/// [`noise_rng`] of the same seed, so runs that add no noise consume identical
/// batch streams.
pub fn run<T: Scalar>(algorithm: Algorithm, problem: &ProblemSpec<T>, cfg: &OptConfig<T>) -> Result<Trace<T>> {
    cfg.validate()?;
    let d = problem.dim();
    check_dim(d, cfg.domain.dim)?;
    if let Some(b) = cfg.budget {
        if algorithm.is_private() {
            if let Ok(limit) = max_steps(problem.n(), cfg.batch, cfg.steps_constant) {
                if cfg.steps > limit {
                    log::warn!(
                        "{} steps exceed c·n²/b² = {limit} for (ε={}, δ={}); check the accountant",
                        cfg.steps,
                        b.epsilon,
                        b.delta
                    );
                }
            }
        }
    }
    let privatizer = build_privatizer(algorithm, cfg)?;
    let x0 = match &cfg.x0 {
        Some(x) => {
            check_dim(d, x.len())?;
            x.clone()
        }
        None => vec![T::zero(); d],
    };
    let mut state = match algorithm {
        Algorithm::Pasan | Algorithm::Sgd => StepState::Adaptive(PasanState::new(x0.clone())),
        Algorithm::Pagan | Algorithm::Adagrad => StepState::Diagonal(PaganState::new(x0.clone())),
        Algorithm::DpsgdIsotropic => StepState::Decaying(DecayingSgdState::new(x0.clone())),
    };

    let mut sampler = BatchSampler::new(cfg.seed, problem.n(), cfg.batch);
    let mut nrng = noise_rng(cfg.seed);
    let mut records = Vec::with_capacity(cfg.steps);
    let mut iterates = cfg.record_iterates.then(Vec::new);
    let mut private_grads = cfg.record_iterates.then(Vec::new);
    let mut true_grads = cfg.record_true_grads.then(Vec::new);
    let initial_loss = if cfg.eval_every > 0 {
        Some(problem.loss(&x0)?)
    } else {
        None
    };
    let batch_size = T::from_usize(cfg.batch).unwrap();

    for k in 1..=cfg.steps {
        let idx = sampler.next_batch();
        let (_, grads) = problem.loss_and_subgrad(state.x(), &idx)?;
        if let Some(tg) = true_grads.as_mut() {
            tg.push(batch_mean(&grads));
        }
        let (ghat, moved) = match &privatizer {
            Privatizer::None => (batch_mean(&grads), 0),
            Privatizer::Ellipsoid {
                ellipsoid,
                radial,
                noise,
            } => {
                let (mut g, moved) = clip_mean(&grads, ellipsoid, *radial, cfg.projection_tol)?;
                add_noise(&mut g, noise, &mut nrng);
                (g, moved)
            }
            Privatizer::Coordinate { lambda, rho, split } => {
                let (mut g, moved) = coordinate_clip_mean(&grads, lambda)?;
                if let Some(split) = split {
                    let b = T::from_usize(cfg.batch).unwrap();
                    for ((gj, &lj), &ej) in g.iter_mut().zip(lambda).zip(split) {
                        let z: f64 = nrng.sample(rand_distr::StandardNormal);
                        *gj = *gj + *rho * lj / (b * ej) * T::lit(z);
                    }
                }
                (g, moved)
            }
        };
        let step_size = state.step(&ghat, cfg.alpha, &cfg.domain)?;
        let evaluate = k == cfg.steps || (cfg.eval_every > 0 && k % cfg.eval_every == 0);
        let loss = if evaluate {
            Some(problem.loss(state.x())?)
        } else {
            None
        };
        records.push(StepRecord {
            k,
            loss,
            grad_norm: norm2(&ghat),
            clip_fraction: T::from_usize(moved).unwrap() / batch_size,
            step_size,
        });
        if let Some(it) = iterates.as_mut() {
            it.push(state.x().to_vec());
        }
        if let Some(pg) = private_grads.as_mut() {
            pg.push(ghat);
        }
    }

    Ok(Trace {
        algorithm,
        initial_loss,
        records,
        x_bar: state.avg().to_vec(),
        x_final: state.x().to_vec(),
        iterates,
        true_grads,
        private_grads,
    })
}
