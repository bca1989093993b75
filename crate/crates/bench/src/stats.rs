use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Linearly interpolated quantile of `values` (the usual "type 7" rule).
/// Returns NaN for an empty slice.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Percentile-bootstrap `[lo, hi]` interval for the median at `level` (e.g. 0.95).
pub fn bootstrap_median_ci(values: &[f64], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    if values.len() < 2 || resamples == 0 {
        let m = median(values);
        return (m, m);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = vec![0.0; values.len()];
    let mut meds: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in draw.iter_mut() {
                *slot = values[rng.random_range(0..values.len())];
            }
            median(&draw)
        })
        .collect();
    meds.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile_sorted(&meds, tail), quantile_sorted(&meds, 1.0 - tail))
}
