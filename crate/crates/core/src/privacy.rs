//! Gaussian noise calibration for ellipsoid-clipped gradients, the
//! iteration budget `T = c n² / b²`, and a Rényi accountant for the
//! Poisson-subsampled Gaussian mechanism.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DiagonalMetric;
use crate::scalar::Scalar;

/// An `(ε, δ)` target. `ε = ∞` is accepted and means "no noise".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::invalid("epsilon", format!("must be > 0, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }
}

/// Multiplier `sqrt(ln(1/δ)) / (b ε)` applied to `N(0, A⁻¹)` noise.
pub fn noise_scale(budget: &PrivacyBudget, batch: usize) -> f64 {
    (1.0 / budget.delta).ln().sqrt() / (batch as f64 * budget.epsilon)
}

/// Noise `scale · ξ` with `ξ ~ N(0, A⁻¹)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec<T: Scalar> {
    pub scale: T,
    pub metric: DiagonalMetric<T>,
    pub batch: usize,
}

impl<T: Scalar> NoiseSpec<T> {
    pub fn new(scale: T, metric: DiagonalMetric<T>, batch: usize) -> Result<Self> {
        if !(scale >= T::zero() && scale.is_finite()) {
            return Err(Error::invalid("scale", format!("must be finite and >= 0, got {scale}")));
        }
        if batch == 0 {
            return Err(Error::invalid("batch", "must be positive"));
        }
        Ok(Self { scale, metric, batch })
    }

    pub fn silent(metric: DiagonalMetric<T>, batch: usize) -> Self {
        Self {
            scale: T::zero(),
            metric,
            batch,
        }
    }

    /// Per-coordinate standard deviation `scale · A_jj^{-1/2}`.
    pub fn std_devs(&self) -> Vec<T> {
        self.metric
            .entries()
            .iter()
            .map(|&a| self.scale / a.sqrt())
            .collect()
    }
}

/// Draws `scale · ξ`, `ξ ~ N(0, A⁻¹)`. A zero scale returns zeros without
/// touching the generator.
pub fn sample_noise<T: Scalar, R: Rng + ?Sized>(spec: &NoiseSpec<T>, rng: &mut R) -> Vec<T> {
    if spec.scale == T::zero() {
        return vec![T::zero(); spec.metric.dim()];
    }
    spec.std_devs()
        .into_iter()
        .map(|sd| {
            let z: f64 = rng.sample(StandardNormal);
            sd * T::lit(z)
        })
        .collect()
}

/// `⌊c n² / b²⌋`, at least 1.
pub fn max_steps(n: usize, batch: usize, c: f64) -> Result<usize> {
    if batch == 0 {
        return Err(Error::invalid("batch", "must be positive"));
    }
    if n < batch {
        return Err(Error::invalid("n", format!("dataset size {n} is smaller than batch {batch}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid("c", format!("must be positive and finite, got {c}")));
    }
    let ratio = n as f64 / batch as f64;
    Ok(((c * ratio * ratio).floor() as usize).max(1))
}

/// One homogeneous stretch of training: `steps` releases at sampling rate `q`
/// with noise multiplier `z` (noise std over per-step sensitivity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccountantEvent {
    pub q: f64,
    pub z: f64,
    pub steps: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccountantLedger {
    pub events: Vec<AccountantEvent>,
}

impl AccountantLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, q: f64, z: f64, steps: u64) -> &mut Self {
        self.events.push(AccountantEvent { q, z, steps });
        self
    }

    /// Ledger for one optimizer run: rate `b/n`, multiplier `scale · b / 2`
    /// (whitened replace-one sensitivity of the clipped batch mean is `2/b`).
    pub fn for_run(n: usize, batch: usize, steps: u64, scale: f64) -> Result<Self> {
        if batch == 0 || n < batch {
            return Err(Error::invalid("batch", format!("need 1 <= b <= n, got b={batch}, n={n}")));
        }
        let mut l = Self::new();
        l.push(batch as f64 / n as f64, noise_multiplier(scale, batch), steps);
        Ok(l)
    }
}

pub fn noise_multiplier(scale: f64, batch: usize) -> f64 {
    scale * batch as f64 / 2.0
}

/// Rényi orders 1.25, 1.5, …, 64.
pub fn default_orders() -> Vec<f64> {
    (5..=256).map(|i| i as f64 * 0.25).collect()
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

fn log_sub(a: f64, b: f64) -> Result<f64> {
    if b == f64::NEG_INFINITY {
        return Ok(a);
    }
    if b > a {
        return Err(Error::Accounting("negative intermediate in fractional-order series".into()));
    }
    if a == b {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(a + (-(b - a).exp()).ln_1p())
}

fn log_erfc(x: f64) -> f64 {
    let r = statrs::function::erf::erfc(x);
    if r > 1e-250 {
        r.ln()
    } else {
        // asymptotic expansion of erfc for large positive x
        let x2 = x * x;
        -x2 - x.ln() - 0.5 * std::f64::consts::PI.ln()
            + (1.0 - 0.5 / x2 + 0.75 / (x2 * x2) - 1.875 / (x2 * x2 * x2)).ln()
    }
}

fn ln_binom_int(n: u64, k: u64) -> f64 {
    statrs::function::factorial::ln_binomial(n, k)
}

/// Integer order: `A_α = Σ_i C(α,i) q^i (1−q)^{α−i} exp((i² − i)/(2z²))`.
fn log_a_int(q: f64, z: f64, alpha: u64) -> f64 {
    let mut acc = f64::NEG_INFINITY;
    for i in 0..=alpha {
        let fi = i as f64;
        let term = ln_binom_int(alpha, i)
            + fi * q.ln()
            + (alpha - i) as f64 * (1.0 - q).ln()
            + (fi * fi - fi) / (2.0 * z * z);
        acc = log_add(acc, term);
    }
    acc
}

/// Fractional order: two-sided series with erfc weights.
fn log_a_frac(q: f64, z: f64, alpha: f64) -> Result<f64> {
    let mut a0 = f64::NEG_INFINITY;
    let mut a1 = f64::NEG_INFINITY;
    let z0 = z * z * (1.0 / q - 1.0).ln() + 0.5;
    let sqrt2z = std::f64::consts::SQRT_2 * z;
    // generalized binomial coefficient C(α, i), tracked as (ln|C|, sign)
    let mut ln_coef = 0.0f64;
    let mut sign = 1.0f64;
    for i in 0..100_000u64 {
        let fi = i as f64;
        if i > 0 {
            let factor = (alpha - fi + 1.0) / fi;
            if factor == 0.0 {
                // α is an integer and the series has terminated
                return Ok(log_add(a0, a1));
            }
            ln_coef += factor.abs().ln();
            if factor < 0.0 {
                sign = -sign;
            }
        }
        let j = alpha - fi;
        let lt0 = ln_coef + fi * q.ln() + j * (1.0 - q).ln();
        let lt1 = ln_coef + j * q.ln() + fi * (1.0 - q).ln();
        let le0 = 0.5f64.ln() + log_erfc((fi - z0) / sqrt2z);
        let le1 = 0.5f64.ln() + log_erfc((z0 - j) / sqrt2z);
        let ls0 = lt0 + (fi * fi - fi) / (2.0 * z * z) + le0;
        let ls1 = lt1 + (j * j - j) / (2.0 * z * z) + le1;
        if sign > 0.0 {
            a0 = log_add(a0, ls0);
            a1 = log_add(a1, ls1);
        } else {
            a0 = log_sub(a0, ls0)?;
            a1 = log_sub(a1, ls1)?;
        }
        if ls0.max(ls1) < -30.0 && fi > alpha {
            return Ok(log_add(a0, a1));
        }
    }
    Err(Error::Accounting(format!(
        "fractional-order series did not converge at order {alpha}"
    )))
}

/// Rényi divergence of order `alpha` for one step of the Poisson-subsampled
/// Gaussian mechanism with rate `q` and multiplier `z`.
pub fn rdp_subsampled_gaussian(q: f64, z: f64, alpha: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Accounting(format!("sampling rate q={q} outside (0, 1]")));
    }
    if !(z > 0.0) || z.is_nan() {
        return Err(Error::Accounting(format!("noise multiplier z={z} must be positive")));
    }
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(Error::Accounting(format!("order {alpha} must be > 1")));
    }
    if z.is_infinite() {
        return Ok(0.0);
    }
    if q == 1.0 {
        return Ok(alpha / (2.0 * z * z));
    }
    let log_a = if alpha.fract() == 0.0 {
        log_a_int(q, z, alpha as u64)
    } else {
        log_a_frac(q, z, alpha)?
    };
    let rdp = log_a / (alpha - 1.0);
    if !rdp.is_finite() {
        return Err(Error::Accounting(format!(
            "RDP not finite for q={q}, z={z}, order={alpha}"
        )));
    }
    Ok(rdp.max(0.0))
}

/// Upper bound on the total `ε` at the given `δ`, composing every event in
/// Rényi divergence over [`default_orders`] and converting with
/// `ε = min_α RDP(α) + ln(1/δ)/(α − 1)`.
pub fn account(ledger: &AccountantLedger, delta: f64) -> Result<f64> {
    account_with_orders(ledger, delta, &default_orders())
}

pub fn account_with_orders(ledger: &AccountantLedger, delta: f64, orders: &[f64]) -> Result<f64> {
    if ledger.events.is_empty() {
        return Err(Error::Accounting("empty ledger".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Accounting(format!("delta={delta} outside (0, 1)")));
    }
    if orders.is_empty() {
        return Err(Error::Accounting("no Rényi orders".into()));
    }
    let mut best = f64::INFINITY;
    for &alpha in orders {
        let mut total = 0.0;
        for ev in &ledger.events {
            if ev.steps == 0 {
                return Err(Error::Accounting("event with zero steps".into()));
            }
            total += ev.steps as f64 * rdp_subsampled_gaussian(ev.q, ev.z, alpha)?;
        }
        let eps = total + (1.0 / delta).ln() / (alpha - 1.0);
        best = best.min(eps);
    }
    Ok(best)
}
