//! Gradient-moment statistics and the parameter choices derived from them:
//! empirical Lipschitz moments, clipping bound `B`, metric `C`, and a private
//! estimator of per-coordinate second moments.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{diameter, mahalanobis_norm, DiagonalMetric, DiameterNorm, Domain};
use crate::optimizers::Algorithm;
use crate::privacy::PrivacyBudget;
use crate::problems::Dataset;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzStats<T: Scalar> {
    pub p: T,
    pub value: T,
    pub metric: DiagonalMetric<T>,
}

/// `((1/n) Σ w_i^p)^{1/p}` over per-example Lipschitz witnesses `w_i = G(z_i; C)`.
pub fn empirical_lipschitz<T: Scalar>(witnesses: &[T], metric: &DiagonalMetric<T>, p: T) -> Result<LipschitzStats<T>> {
    if witnesses.is_empty() {
        return Err(Error::invalid("witnesses", "sample must be nonempty"));
    }
    if !(p >= T::one()) {
        return Err(Error::invalid("p", format!("must be >= 1, got {p}")));
    }
    if witnesses.iter().any(|w| !(*w >= T::zero() && w.is_finite())) {
        return Err(Error::invalid("witnesses", "must be finite and nonnegative"));
    }
    let value = if p.is_infinite() {
        witnesses.iter().copied().fold(T::zero(), T::max)
    } else {
        // factor out the maximum so large p does not overflow
        let m = witnesses.iter().copied().fold(T::zero(), T::max);
        if m == T::zero() {
            T::zero()
        } else {
            let n = T::from_usize(witnesses.len()).unwrap();
            let mean = witnesses.iter().map(|&w| (w / m).powf(p)).sum::<T>() / n;
            m * mean.powf(p.recip())
        }
    };
    Ok(LipschitzStats {
        p,
        value,
        metric: metric.clone(),
    })
}

/// Witnesses `‖z_i‖_C` for a generalized linear model with a 1-Lipschitz link.
pub fn glm_witnesses<T: Scalar>(data: &Dataset<T>, metric: &DiagonalMetric<T>) -> Result<Vec<T>> {
    data.rows().map(|z| mahalanobis_norm(z, metric)).collect()
}

/// Moment bound `μ + κ √p · sqrt(Σ_j C_jj σ_j²)` for a linear term with
/// independent `σ_j²`-sub-Gaussian coordinates.
pub fn subgaussian_bound<T: Scalar>(mu: T, p: T, metric: &DiagonalMetric<T>, sigma: &[T], kappa: T) -> Result<T> {
    check_dim(metric.dim(), sigma.len())?;
    if !(kappa > T::zero()) {
        return Err(Error::invalid("kappa", "must be positive"));
    }
    let s: T = metric.entries().iter().zip(sigma).map(|(&c, &s)| c * s * s).sum();
    Ok(mu + kappa * p.sqrt() * s.sqrt())
}

/// Default constant for [`subgaussian_bound`].
pub const DEFAULT_KAPPA: f64 = 3.0;

/// Clipping bound `B` balancing projection bias against privacy noise.
///
/// PASAN: `2 G_{2p} (diam_{C⁻¹} n ε / (diam_2 sqrt(tr C⁻¹) sqrt(ln 1/δ)))^{1/p}`.
/// PAGAN: `2 G_{2p} (diam_{C⁻¹} n ε / (diam_∞ sqrt(ln 1/δ) tr C^{-1/2}))^{1/p}`.
pub fn choose_clip_bound<T: Scalar>(
    algorithm: Algorithm,
    metric: &DiagonalMetric<T>,
    p: T,
    g2p: T,
    domain: &Domain<T>,
    n: usize,
    budget: &PrivacyBudget,
) -> Result<T> {
    if !(p >= T::one()) || !(g2p > T::zero()) || n == 0 {
        return Err(Error::invalid("choose_clip_bound", "p >= 1, G_2p > 0 and n >= 1 required"));
    }
    let d_inv = diameter(domain, DiameterNorm::InvMetric(metric))?;
    let log_term = T::lit((1.0 / budget.delta).ln().sqrt());
    let n_eps = T::from_usize(n).unwrap() * T::lit(budget.epsilon);
    let denom = match algorithm {
        Algorithm::Pasan | Algorithm::Sgd | Algorithm::DpsgdIsotropic => {
            diameter(domain, DiameterNorm::L2)? * metric.trace_inverse().sqrt() * log_term
        }
        Algorithm::Pagan | Algorithm::Adagrad => {
            diameter(domain, DiameterNorm::LInf)? * log_term * metric.trace_inverse_sqrt()
        }
    };
    let two = T::lit(2.0);
    Ok(two * g2p * (d_inv * n_eps / denom).powf(p.recip()))
}

/// Metric `C` minimizing the stylized sub-Gaussian bounds:
/// PAGAN `C_jj = σ_j^{−4/3}`, PASAN `C_jj = σ_j^{−1}`.
pub fn choose_metric<T: Scalar>(algorithm: Algorithm, sigma: &[T]) -> Result<DiagonalMetric<T>> {
    if sigma.iter().any(|s| !(*s > T::zero() && s.is_finite())) {
        return Err(Error::invalid("sigma", "entries must be positive and finite"));
    }
    let power = match algorithm {
        Algorithm::Pagan | Algorithm::Adagrad => T::lit(-4.0 / 3.0),
        _ => -T::one(),
    };
    DiagonalMetric::new(sigma.iter().map(|&s| s.powf(power)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    Exact,
    PrivateEstimator,
    PublicData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct MomentEstimate<T: Scalar> {
    pub sigma_hat: Vec<T>,
    /// Moment ratio `r`.
    pub r: T,
    pub source: MomentSource,
}

/// Number of halving rounds `⌈1.5 log₂ d⌉` (at least 1).
pub fn estimator_rounds(d: usize) -> usize {
    if d <= 1 {
        return 1;
    }
    ((1.5 * (d as f64).log2()).ceil() as usize).max(1)
}

/// `ln r`, floored at 1 so the truncation level stays above the data scale for `r ≤ e`.
fn log_ratio(r: f64) -> f64 {
    r.ln().max(1.0)
}

/// Sample size at which the estimator's accuracy guarantee applies:
/// `1000 r² ln(8d/β) · max{T √d ln²r ln(T/δ) / ε, r²}`.
pub fn required_sample_size(d: usize, r: f64, budget: &PrivacyBudget, beta: f64) -> f64 {
    let t = estimator_rounds(d) as f64;
    let lr = log_ratio(r);
    let privacy = t * (d as f64).sqrt() * lr * lr * (t / budget.delta).ln() / budget.epsilon;
    1000.0 * r * r * (8.0 * d as f64 / beta).ln() * privacy.max(r * r)
}

/// Private per-coordinate second-moment estimation by halving truncation.
///
/// Round `t = 1..=T` truncates squared coordinates at `ρ_t² = (4 r Δ ln r)²`
/// (`Δ = 2^{1−t}`), adds Gaussian noise of variance `ρ_t⁴ T² d ln(T/δ) / (n² ε²)`
/// and freezes `σ̂_j = 2^{−t}` once the noisy mean square reaches `2^{−2t−2}`.
/// Coordinates never frozen get `2^{−T}`. Data are assumed scaled so that
/// `max_j σ_j ≈ 1`.
pub fn private_second_moment<T: Scalar, R: Rng + ?Sized>(
    data: &Dataset<T>,
    r: T,
    budget: &PrivacyBudget,
    rng: &mut R,
) -> Result<MomentEstimate<T>> {
    private_second_moment_rounds(data, r, budget, estimator_rounds(data.dim()), rng)
}

pub fn private_second_moment_rounds<T: Scalar, R: Rng + ?Sized>(
    data: &Dataset<T>,
    r: T,
    budget: &PrivacyBudget,
    rounds: usize,
    rng: &mut R,
) -> Result<MomentEstimate<T>> {
    let r64 = r.to_f64_lossy();
    if !(r64 > 1.0 && r64.is_finite()) {
        return Err(Error::invalid("r", format!("moment ratio must exceed 1, got {r64}")));
    }
    if rounds == 0 {
        return Err(Error::invalid("rounds", "must be positive"));
    }
    let (n, d) = (data.n(), data.dim());
    let lr = log_ratio(r64);
    let noise_sd_factor = if budget.epsilon.is_infinite() {
        0.0
    } else {
        (rounds as f64) * (d as f64).sqrt() * ((rounds as f64) / budget.delta).ln().max(0.0).sqrt()
            / (n as f64 * budget.epsilon)
    };

    let mut sigma_hat: Vec<Option<f64>> = vec![None; d];
    let mut delta_level = 1.0f64;
    for t in 1..=rounds {
        let rho = 4.0 * r64 * delta_level * lr;
        let rho_sq = rho * rho;
        let threshold = 2f64.powi(-2 * t as i32 - 2);
        for j in 0..d {
            if sigma_hat[j].is_some() {
                continue;
            }
            let mean: f64 = data
                .column(j)
                .map(|v| {
                    let s = v.to_f64_lossy();
                    (s * s).min(rho_sq)
                })
                .sum::<f64>()
                / n as f64;
            let noise = if noise_sd_factor > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                rho_sq * noise_sd_factor * z
            } else {
                0.0
            };
            if mean + noise >= threshold {
                sigma_hat[j] = Some(2f64.powi(-(t as i32)));
            }
        }
        delta_level /= 2.0;
    }
    let floor = 2f64.powi(-(rounds as i32));
    Ok(MomentEstimate {
        sigma_hat: sigma_hat.into_iter().map(|s| T::lit(s.unwrap_or(floor))).collect(),
        r,
        source: MomentSource::PrivateEstimator,
    })
}

/// `Ĉ_j = (r σ̂_j)^{−4/3} / 4`.
pub fn hat_metric<T: Scalar>(estimate: &MomentEstimate<T>) -> Result<DiagonalMetric<T>> {
    let four = T::lit(4.0);
    let power = T::lit(-4.0 / 3.0);
    DiagonalMetric::new(
        estimate
            .sigma_hat
            .iter()
            .map(|&s| (estimate.r * s).powf(power) / four)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::gen_linear;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empirical_lipschitz_examples() {
        let c = DiagonalMetric::identity(1);
        for p in [1.0, 2.0, 7.5] {
            assert_relative_eq!(empirical_lipschitz(&[0.3; 5], &c, p).unwrap().value, 0.3, max_relative = 1e-14);
        }
        assert_relative_eq!(empirical_lipschitz(&[1.0, 3.0], &c, 2.0).unwrap().value, 5f64.sqrt());
        assert!(empirical_lipschitz(&[1.0], &c, 0.5).is_err());
        assert!(empirical_lipschitz::<f64>(&[], &c, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn empirical_lipschitz_monotone_in_p(
            w in prop::collection::vec(0.0f64..10.0, 1..30),
            p in 1.0f64..20.0,
            dp in 0.0f64..5.0,
        ) {
            let c = DiagonalMetric::identity(1);
            let a = empirical_lipschitz(&w, &c, p).unwrap().value;
            let b = empirical_lipschitz(&w, &c, p + dp).unwrap().value;
            prop_assert!(b >= a * (1.0 - 1e-12));
        }
    }

    #[test]
    fn subgaussian_bound_examples() {
        let c = DiagonalMetric::identity(4);
        assert_eq!(subgaussian_bound(0.7, 3.0, &c, &[0.0; 4], 3.0).unwrap(), 0.7);
        assert_relative_eq!(subgaussian_bound(0.0, 1.0, &c, &[1.0; 4], 3.0).unwrap(), 3.0 * 2.0);
    }

    #[test]
    fn subgaussian_bound_covers_gaussian_moments() {
        // G(z; C) = ‖z‖_C for the linear loss
        let sigma = [1.0, 0.5, 0.25, 0.1];
        let c = DiagonalMetric::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = gen_linear(100_000, &sigma, &mut rng).unwrap();
        let w = glm_witnesses(&data, &c).unwrap();
        for p in [1.0, 2.0, 4.0, 8.0] {
            let emp = empirical_lipschitz(&w, &c, p).unwrap().value;
            let bound = subgaussian_bound(0.0, p, &c, &sigma, DEFAULT_KAPPA).unwrap();
            assert!(emp <= bound, "p={p}: {emp} > {bound}");
        }
    }

    #[test]
    fn choose_clip_bound_examples() {
        let c = DiagonalMetric::identity(1);
        let dom = Domain::cube(1.0, 1).unwrap();
        // nε = 100 with n = 100, ε = 1
        let budget = PrivacyBudget::new(1.0, 0.1).unwrap();
        let b = choose_clip_bound(Algorithm::Pasan, &c, 1.0, 1.0, &dom, 100, &budget).unwrap();
        let hand = 2.0 * (2.0 * 100.0 / (2.0 * 1.0 * 10f64.ln().sqrt()));
        assert_relative_eq!(b, hand, max_relative = 1e-12);
        assert!((b - 131.8).abs() < 0.05);

        let dom = Domain::cube(1.0, 5).unwrap();
        let c = DiagonalMetric::new(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let budget = PrivacyBudget::new(0.5, 1e-5).unwrap();
        for alg in [Algorithm::Pasan, Algorithm::Pagan] {
            let b1 = choose_clip_bound(alg, &c, 3.0, 1.2, &dom, 1000, &budget).unwrap();
            let b2 = choose_clip_bound(alg, &c, 3.0, 1.2, &dom, 2000, &budget).unwrap();
            assert_relative_eq!(b2 / b1, 2f64.powf(1.0 / 3.0), max_relative = 1e-12);
            let big = choose_clip_bound(alg, &c, 1e9, 1.2, &dom, 1000, &budget).unwrap();
            assert_relative_eq!(big, 2.4, max_relative = 1e-6);
        }
    }

    #[test]
    fn choose_metric_examples() {
        for alg in [Algorithm::Pasan, Algorithm::Pagan] {
            assert_eq!(choose_metric(alg, &[1.0; 3]).unwrap().entries(), &[1.0; 3]);
        }
        let sigma: Vec<f64> = (1..=6).map(|j| (j as f64).powf(-1.5)).collect();
        let c = choose_metric(Algorithm::Pagan, &sigma).unwrap();
        for (j, v) in c.entries().iter().enumerate() {
            assert_relative_eq!(*v, ((j + 1) * (j + 1)) as f64, max_relative = 1e-12);
        }
        let c = choose_metric(Algorithm::Pasan, &[0.5, 0.25]).unwrap();
        assert_eq!(c.entries(), &[2.0, 4.0]);
        assert!(choose_metric(Algorithm::Pagan, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn estimator_constant_coordinate() {
        let data = Dataset::new(50, 1, vec![1.0; 50], None).unwrap();
        let budget = PrivacyBudget::new(f64::INFINITY, 1e-5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let est = private_second_moment(&data, 2.0, &budget, &mut rng).unwrap();
        assert_eq!(est.sigma_hat, vec![0.5]);
    }

    #[test]
    fn estimator_zero_coordinate_gets_floor() {
        let mut feats = Vec::new();
        for _ in 0..100 {
            feats.extend_from_slice(&[1.0, 0.0, 0.0, 0.0]);
        }
        let data = Dataset::new(100, 4, feats, None).unwrap();
        let budget = PrivacyBudget::new(1e6, 1e-5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let est = private_second_moment(&data, 2.0, &budget, &mut rng).unwrap();
        let t = estimator_rounds(4);
        assert_eq!(t, 3);
        assert_eq!(est.sigma_hat[1], 2f64.powi(-(t as i32)));
        assert_eq!(est.sigma_hat[0], 0.5);
    }

    #[test]
    fn noiseless_estimator_lands_in_adjacent_bucket() {
        let sigma = [1.0, 0.6, 0.3, 0.2, 0.11, 0.07, 0.04, 0.02];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = gen_linear(200_000, &sigma, &mut rng).unwrap();
        let budget = PrivacyBudget::new(f64::INFINITY, 1e-5).unwrap();
        let est = private_second_moment_rounds(&data, 2.0, &budget, 8, &mut rng).unwrap();
        for (s, h) in sigma.iter().zip(&est.sigma_hat) {
            // frozen at the first t with σ ≥ 2^{-t-1}; σ̂ ∈ [σ/2, 2σ] up to sampling error
            assert!(*h >= 0.5 * s * 0.95 && *h <= 2.0 * s * 1.05, "σ={s}, σ̂={h}");
        }
    }

    #[test]
    fn estimator_rejects_small_ratio() {
        let data = Dataset::new(2, 1, vec![1.0, 1.0], None).unwrap();
        let budget = PrivacyBudget::new(1.0, 1e-5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(private_second_moment(&data, 1.0, &budget, &mut rng).is_err());
        assert!(private_second_moment(&data, 0.5, &budget, &mut rng).is_err());
    }

    #[test]
    fn rounds_use_base_two() {
        assert_eq!(estimator_rounds(16), 6);
        assert_eq!(estimator_rounds(100), 10);
        for d in [2usize, 16, 100, 1000] {
            assert!(2f64.powi(-(estimator_rounds(d) as i32)) <= (d as f64).powf(-1.5) + 1e-15);
        }
    }

    #[test]
    fn hat_metric_examples() {
        let est = MomentEstimate {
            sigma_hat: vec![1.0, 0.5],
            r: 2.0,
            source: MomentSource::PrivateEstimator,
        };
        let c = hat_metric(&est).unwrap();
        assert_relative_eq!(c.entries()[0], 2f64.powf(-4.0 / 3.0) / 4.0, max_relative = 1e-14);
        assert_relative_eq!(c.entries()[1] / c.entries()[0], 2f64.powf(4.0 / 3.0), max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn hat_metric_is_dominated_when_estimate_is_good(
            sigma in 0.001f64..1.0,
            factor in 0.5f64..8.0,
            r in 1.01f64..10.0,
        ) {
            // σ̂ ≥ σ/2 implies Ĉ = (rσ̂)^{-4/3}/4 ≤ (rσ)^{-4/3}
            let est = MomentEstimate { sigma_hat: vec![sigma * factor], r, source: MomentSource::Exact };
            let c_hat = hat_metric(&est).unwrap().entries()[0];
            let c = (r * sigma).powf(-4.0 / 3.0);
            prop_assert!(c_hat <= c * (1.0 + 1e-12));
        }
    }

    #[test]
    fn required_sample_size_is_monotone() {
        let b = PrivacyBudget::new(1.0, 1e-5).unwrap();
        let tighter = PrivacyBudget::new(0.5, 1e-5).unwrap();
        assert!(required_sample_size(16, 2.0, &tighter, 0.1) > required_sample_size(16, 2.0, &b, 0.1));
        assert_abs_diff_eq!(log_ratio(2.0), 1.0);
        assert_abs_diff_eq!(log_ratio(10.0), 10f64.ln());
    }
}
