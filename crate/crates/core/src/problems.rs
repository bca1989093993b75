//! Datasets and convex losses: the planted absolute-regression problem and
//! the random linear loss `F(x; z) = ⟨x, z⟩`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::Domain;
use crate::scalar::{dot, Scalar};

/// `n` examples of dimension `d`, features stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar> {
    n: usize,
    d: usize,
    features: Vec<T>,
    targets: Option<Vec<T>>,
    pub x_star: Option<Vec<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(n: usize, d: usize, features: Vec<T>, targets: Option<Vec<T>>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::invalid("dataset", "needs at least one example and one feature"));
        }
        check_dim(n * d, features.len())?;
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        if let Some(t) = &targets {
            check_dim(n, t.len())?;
            if !t.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("dataset targets"));
            }
        }
        Ok(Self {
            n,
            d,
            features,
            targets,
            x_star: None,
        })
    }

    pub fn with_x_star(mut self, x_star: Vec<T>) -> Result<Self> {
        check_dim(self.d, x_star.len())?;
        self.x_star = Some(x_star);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.features.chunks_exact(self.d)
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn targets(&self) -> Option<&[T]> {
        self.targets.as_deref()
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = T> + '_ {
        self.features.iter().skip(j).step_by(self.d).copied()
    }
}

/// Laplace(0, scale) by inversion.
fn laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Planted absolute regression: `x* ~ Unif{−1,1}^d`, `a_i ~ N(0, diag(σ)²)`,
/// `b_i = ⟨a_i, x*⟩ + ξ_i` with `ξ_i ~ Laplace(0, τ)` (τ is the scale).
pub fn gen_abs_regression<T: Scalar, R: Rng + ?Sized>(
    n: usize,
    sigma: &[T],
    tau: T,
    rng: &mut R,
) -> Result<Dataset<T>> {
    let d = sigma.len();
    if sigma.iter().any(|s| !(*s > T::zero() && s.is_finite())) {
        return Err(Error::invalid("sigma", "entries must be positive and finite"));
    }
    if !(tau >= T::zero() && tau.is_finite()) {
        return Err(Error::invalid("tau", "must be finite and >= 0"));
    }
    let x_star: Vec<T> = (0..d)
        .map(|_| if rng.random::<bool>() { T::one() } else { -T::one() })
        .collect();
    let mut features = Vec::with_capacity(n * d);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let start = features.len();
        for &s in sigma {
            let z: f64 = rng.sample(StandardNormal);
            features.push(s * T::lit(z));
        }
        let clean = dot(&features[start..], &x_star);
        targets.push(clean + T::lit(laplace(rng, tau.to_f64_lossy())));
    }
    Dataset::new(n, d, features, Some(targets))?.with_x_star(x_star)
}

/// Features with independent `N(0, σ_j²)` coordinates and no targets.
pub fn gen_linear<T: Scalar, R: Rng + ?Sized>(n: usize, sigma: &[T], rng: &mut R) -> Result<Dataset<T>> {
    if sigma.iter().any(|s| !(*s >= T::zero() && s.is_finite())) {
        return Err(Error::invalid("sigma", "entries must be finite and >= 0"));
    }
    let mut features = Vec::with_capacity(n * sigma.len());
    for _ in 0..n {
        for &s in sigma {
            let z: f64 = rng.sample(StandardNormal);
            features.push(s * T::lit(z));
        }
    }
    Dataset::new(n, sigma.len(), features, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `|⟨a, x⟩ − b|`
    AbsRegression,
    /// `⟨x, z⟩`
    Linear,
}

/// A convex empirical risk `f(x; S) = (1/n) Σ F(x; z_i)` over a domain.
#[derive(Debug, Clone)]
pub struct ProblemSpec<T: Scalar> {
    pub loss: LossKind,
    pub data: Arc<Dataset<T>>,
    pub domain: Domain<T>,
}

impl<T: Scalar> ProblemSpec<T> {
    pub fn new(loss: LossKind, data: Arc<Dataset<T>>, domain: Domain<T>) -> Result<Self> {
        check_dim(data.dim(), domain.dim)?;
        if loss == LossKind::AbsRegression && data.targets().is_none() {
            return Err(Error::invalid("data", "absolute regression needs targets"));
        }
        Ok(Self { loss, data, domain })
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    fn example_loss(&self, x: &[T], i: usize) -> T {
        let a = self.data.row(i);
        match self.loss {
            LossKind::AbsRegression => (dot(a, x) - self.data.targets().unwrap()[i]).abs(),
            LossKind::Linear => dot(a, x),
        }
    }

    /// Writes a subgradient of `F(·; z_i)` at `x` into `out`.
    ///
    /// At the kink of the absolute loss the zero subgradient is used.
    pub fn example_subgradient(&self, x: &[T], i: usize, out: &mut [T]) {
        let a = self.data.row(i);
        match self.loss {
            LossKind::AbsRegression => {
                let r = dot(a, x) - self.data.targets().unwrap()[i];
                let s = if r > T::zero() {
                    T::one()
                } else if r < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
                out.iter_mut().zip(a).for_each(|(o, &aj)| *o = s * aj);
            }
            LossKind::Linear => out.copy_from_slice(a),
        }
    }

    /// Full empirical loss `f(x; S)`.
    pub fn loss(&self, x: &[T]) -> Result<T> {
        check_dim(self.dim(), x.len())?;
        let n = self.n();
        let total: T = (0..n).map(|i| self.example_loss(x, i)).sum();
        Ok(total / T::from_usize(n).unwrap())
    }

    /// Mean loss over `batch` and the per-example subgradients.
    pub fn loss_and_subgrad(&self, x: &[T], batch: &[usize]) -> Result<(T, Vec<Vec<T>>)> {
        check_dim(self.dim(), x.len())?;
        if batch.is_empty() {
            return Err(Error::invalid("batch", "must be nonempty"));
        }
        let n = self.n();
        let mut loss = T::zero();
        let mut grads = Vec::with_capacity(batch.len());
        for &i in batch {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            loss = loss + self.example_loss(x, i);
            let mut g = vec![T::zero(); self.dim()];
            self.example_subgradient(x, i, &mut g);
            grads.push(g);
        }
        Ok((loss / T::from_usize(batch.len()).unwrap(), grads))
    }
}

/// Random linear objective with `σ_j`-scaled coordinates on `[−1, 1]^d`.
pub fn linear_problem<T: Scalar, R: Rng + ?Sized>(sigma: &[T], n: usize, rng: &mut R) -> Result<ProblemSpec<T>> {
    let data = gen_linear(n, sigma, rng)?;
    let domain = Domain::cube(T::one(), sigma.len())?;
    ProblemSpec::new(LossKind::Linear, Arc::new(data), domain)
}

/// `σ_j = j^{−power}` for `j = 1..=d`.
pub fn power_law_sigma<T: Scalar>(d: usize, power: f64) -> Vec<T> {
    (1..=d).map(|j| T::lit((j as f64).powf(-power))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn abs_problem(n: usize, d: usize, tau: f64, seed: u64) -> ProblemSpec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = power_law_sigma(d, 1.5);
        let data = gen_abs_regression(n, &sigma, tau, &mut rng).unwrap();
        ProblemSpec::new(LossKind::AbsRegression, Arc::new(data), Domain::cube(1.0, d).unwrap()).unwrap()
    }

    #[test]
    fn noiseless_planted_optimum_has_zero_loss() {
        let p = abs_problem(200, 10, 0.0, 1);
        let xs = p.data.x_star.clone().unwrap();
        assert_eq!(p.loss(&xs).unwrap(), 0.0);
        let (l, grads) = p.loss_and_subgrad(&xs, &[0, 5, 7]).unwrap();
        assert_eq!(l, 0.0);
        assert!(grads.iter().all(|g| g.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn single_example_loss_and_grad() {
        let data = Dataset::new(1, 2, vec![1.0, 0.0], Some(vec![0.0])).unwrap();
        let p = ProblemSpec::new(LossKind::AbsRegression, Arc::new(data), Domain::cube(5.0, 2).unwrap()).unwrap();
        let (l, g) = p.loss_and_subgrad(&[2.0, 0.0], &[0]).unwrap();
        assert_eq!(l, 2.0);
        assert_eq!(g[0], vec![1.0, 0.0]);
        assert!(matches!(
            p.loss_and_subgrad(&[2.0, 0.0], &[3]),
            Err(Error::IndexOutOfRange { index: 3, len: 1 })
        ));
    }

    #[test]
    fn generator_is_deterministic() {
        let a = abs_problem(50, 5, 0.01, 9);
        let b = abs_problem(50, 5, 0.01, 9);
        assert_eq!(*a.data, *b.data);
    }

    #[test]
    fn feature_scales_follow_sigma() {
        let p = abs_problem(5000, 100, 0.01, 2);
        let sigma: Vec<f64> = power_law_sigma(100, 1.5);
        let n = p.n() as f64;
        for (j, s) in sigma.iter().enumerate() {
            let col: Vec<f64> = p.data.column(j).collect();
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!((sd / s - 1.0).abs() < 0.05, "column {j}: {sd} vs {s}");
        }
        assert_eq!(sigma[0], 1.0);
        assert_abs_diff_eq!(sigma[3], 4f64.powf(-1.5), epsilon = 1e-15);
    }

    #[test]
    fn batch_gradient_matches_finite_differences() {
        let p = abs_problem(300, 6, 0.01, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch: Vec<usize> = (0..40).map(|_| rng.random_range(0..300)).collect();
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, grads) = p.loss_and_subgrad(&x, &batch).unwrap();
        let mut mean = vec![0.0; 6];
        for g in &grads {
            for j in 0..6 {
                mean[j] += g[j] / batch.len() as f64;
            }
        }
        let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = 1e-7;
        let at = |t: f64| {
            let y: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + t * b).collect();
            p.loss_and_subgrad(&y, &batch).unwrap().0
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let analytic: f64 = mean.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert_abs_diff_eq!(fd, analytic, epsilon = 1e-5);
    }

    #[test]
    fn linear_problem_gradient_is_example() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = linear_problem(&[1.0, 0.5, 0.25], 100, &mut rng).unwrap();
        let (_, g) = p.loss_and_subgrad(&[0.3, -0.2, 0.9], &[4, 17]).unwrap();
        assert_eq!(g[0], p.data.row(4));
        assert_eq!(g[1], p.data.row(17));

        let x = [0.3, -0.2, 0.9];
        let mut zbar = [0.0; 3];
        for row in p.data.rows() {
            for j in 0..3 {
                zbar[j] += row[j] / 100.0;
            }
        }
        let expect: f64 = zbar.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert_abs_diff_eq!(p.loss(&x).unwrap(), expect, epsilon = 1e-12);
    }

    #[test]
    fn shape_errors() {
        assert!(Dataset::new(2, 2, vec![1.0; 3], None).is_err());
        assert!(Dataset::new(2, 2, vec![1.0; 4], Some(vec![0.0])).is_err());
        let data = Dataset::new(2, 2, vec![1.0; 4], None).unwrap();
        assert!(ProblemSpec::new(LossKind::AbsRegression, Arc::new(data.clone()), Domain::cube(1.0, 2).unwrap()).is_err());
        assert!(ProblemSpec::new(LossKind::Linear, Arc::new(data), Domain::cube(1.0, 3).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn abs_regression_is_convex(seed in 0u64..1000, lam in 0.0f64..1.0) {
            let p = abs_problem(30, 4, 0.1, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
            let lhs = p.loss(&mix).unwrap();
            let rhs = lam * p.loss(&x).unwrap() + (1.0 - lam) * p.loss(&y).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn subgradient_inequality_holds(seed in 0u64..1000) {
            let p = abs_problem(30, 4, 0.1, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let all: Vec<usize> = (0..30).collect();
            let (fx, grads) = p.loss_and_subgrad(&x, &all).unwrap();
            let g: Vec<f64> = (0..4).map(|j| grads.iter().map(|gi| gi[j]).sum::<f64>() / 30.0).collect();
            let fy = p.loss(&y).unwrap();
            let lin: f64 = g.iter().zip(y.iter().zip(&x)).map(|(gj, (a, b))| gj * (a - b)).sum();
            prop_assert!(fy >= fx + lin - 1e-9);
        }
    }
}
