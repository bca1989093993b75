//! Mahalanobis geometry under diagonal metrics: norms, ellipsoids, Euclidean
//! projection onto ellipsoids, weighted projection onto the feasible domain,
//! and diameters.
//!
//! Everything here is a pure function of its arguments.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::{all_finite, norm2_sq, Scalar};

/// Default accuracy of the ellipsoid root finder, `|‖y‖_A − 1| ≤ tol`.
pub const DEFAULT_PROJECTION_TOL: f64 = 1e-10;

const MAX_BISECTION_ITERS: usize = 100;
const MAX_NEWTON_ITERS: usize = 60;

/// Positive diagonal matrix defining a Mahalanobis norm `‖x‖_M = sqrt(Σ M_jj x_j²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct DiagonalMetric<T: Scalar> {
    entries: Vec<T>,
}

impl<T: Scalar> DiagonalMetric<T> {
    pub fn new(entries: Vec<T>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("metric", "dimension must be at least 1"));
        }
        if let Some(bad) = entries.iter().find(|v| !(v.is_finite() && **v > T::zero())) {
            return Err(Error::invalid(
                "metric",
                format!("entries must be positive and finite, found {bad}"),
            ));
        }
        Ok(Self { entries })
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim > 0, "identity metric needs dim >= 1");
        Self {
            entries: vec![T::one(); dim],
        }
    }

    /// `s · M` for a positive finite `s`.
    pub fn scaled(&self, s: T) -> Result<Self> {
        Self::new(self.entries.iter().map(|&v| v * s).collect())
    }

    /// Elementwise inverse `M⁻¹`.
    pub fn inverse(&self) -> Self {
        Self {
            entries: self.entries.iter().map(|&v| v.recip()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    /// `tr(M⁻¹)`.
    pub fn trace_inverse(&self) -> T {
        self.entries.iter().map(|&v| v.recip()).sum()
    }

    /// `tr(M^{-1/2})`.
    pub fn trace_inverse_sqrt(&self) -> T {
        self.entries.iter().map(|&v| v.sqrt().recip()).sum()
    }

    pub fn max_inverse_sqrt(&self) -> T {
        self.entries
            .iter()
            .map(|&v| v.sqrt().recip())
            .fold(T::zero(), T::max)
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for DiagonalMetric<T> {
    type Error = Error;
    fn try_from(v: Vec<T>) -> Result<Self> {
        Self::new(v)
    }
}

impl<T: Scalar> From<DiagonalMetric<T>> for Vec<T> {
    fn from(m: DiagonalMetric<T>) -> Self {
        m.entries
    }
}

/// The unit ball `E_A = {x : ‖x‖_A ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid<T: Scalar> {
    pub metric: DiagonalMetric<T>,
}

impl<T: Scalar> Ellipsoid<T> {
    pub fn new(metric: DiagonalMetric<T>) -> Self {
        Self { metric }
    }

    /// Ellipsoid `{‖x‖_C ≤ B}`, i.e. `E_A` with `A = C / B²`.
    pub fn from_clip(c: &DiagonalMetric<T>, bound: T) -> Result<Self> {
        if !(bound.is_finite() && bound > T::zero()) {
            return Err(Error::invalid("clip bound", format!("must be positive and finite, got {bound}")));
        }
        Ok(Self::new(c.scaled((bound * bound).recip())?))
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn contains(&self, x: &[T]) -> Result<bool> {
        Ok(mahalanobis_norm_sq(x, &self.metric)? <= T::one())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// `[−R, R]^d`
    InfinityBox,
    /// `{‖x‖₂ ≤ R}`
    L2Ball,
}

/// Constraint set the optimizers are projected onto.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Domain<T: Scalar> {
    pub kind: DomainKind,
    pub radius: T,
    pub dim: usize,
}

impl<T: Scalar> Domain<T> {
    pub fn new(kind: DomainKind, radius: T, dim: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > T::zero()) {
            return Err(Error::invalid("radius", format!("must be positive and finite, got {radius}")));
        }
        if dim == 0 {
            return Err(Error::invalid("dim", "domain dimension must be at least 1"));
        }
        Ok(Self { kind, radius, dim })
    }

    pub fn cube(radius: T, dim: usize) -> Result<Self> {
        Self::new(DomainKind::InfinityBox, radius, dim)
    }

    pub fn ball(radius: T, dim: usize) -> Result<Self> {
        Self::new(DomainKind::L2Ball, radius, dim)
    }

    /// Membership up to an absolute slack `tol`.
    pub fn contains(&self, x: &[T], tol: T) -> bool {
        if x.len() != self.dim {
            return false;
        }
        match self.kind {
            DomainKind::InfinityBox => x.iter().all(|v| v.abs() <= self.radius + tol),
            DomainKind::L2Ball => norm2_sq(x).sqrt() <= self.radius + tol,
        }
    }
}

/// Norm used by [`diameter`].
#[derive(Debug, Clone, Copy)]
pub enum DiameterNorm<'a, T: Scalar> {
    L2,
    LInf,
    /// `‖·‖_{C⁻¹}` for the given `C`.
    InvMetric(&'a DiagonalMetric<T>),
}

fn check_vec<T: Scalar>(x: &[T], dim: usize, what: &'static str) -> Result<()> {
    check_dim(dim, x.len())?;
    if all_finite(x) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// `Σ_j M_jj x_j²`.
pub fn mahalanobis_norm_sq<T: Scalar>(x: &[T], m: &DiagonalMetric<T>) -> Result<T> {
    check_vec(x, m.dim(), "mahalanobis_norm input")?;
    Ok(x.iter().zip(m.entries()).map(|(&v, &a)| a * v * v).sum())
}

/// `‖x‖_M = sqrt(xᵀ M x)`.
pub fn mahalanobis_norm<T: Scalar>(x: &[T], m: &DiagonalMetric<T>) -> Result<T> {
    mahalanobis_norm_sq(x, m).map(T::sqrt)
}

/// Euclidean projection of `x` onto `E_A`.
///
/// Points already inside are returned unchanged. Otherwise the KKT multiplier
/// `λ > 0` of `y_j = x_j / (1 + λ A_jj)` is the root of the secular function
/// `φ(λ) = Σ A_jj x_j² / (1 + λ A_jj)² − 1`, which is convex and decreasing on
/// `[0, ∞)`. Newton from the left converges monotonically; a bisection bracket
/// guards it. The result is rescaled radially by at most `tol` so that it is
/// feasible in floating point.
pub fn project_onto_ellipsoid<T: Scalar>(x: &[T], e: &Ellipsoid<T>, tol: T) -> Result<Vec<T>> {
    let a = e.metric.entries();
    let sq = mahalanobis_norm_sq(x, &e.metric)?;
    if sq <= T::one() {
        return Ok(x.to_vec());
    }
    if !(tol > T::zero()) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let tol = tol.max(T::tol_floor());

    let phi = |lam: T| -> (T, T) {
        let mut f = -T::one();
        let mut df = T::zero();
        for (&aj, &xj) in a.iter().zip(x) {
            let den = T::one() + lam * aj;
            let t = aj * xj * xj / (den * den);
            f = f + t;
            df = df - (t + t) * aj / den;
        }
        (f, df)
    };

    // Upper bracket: every denominator is at least 1 + λ·min A, so φ(hi) ≤ 0.
    let a_min = a.iter().copied().fold(T::infinity(), T::min);
    // points a rounding error outside give hi = 0, which doubling cannot grow
    let mut hi = ((sq.sqrt() - T::one()) / a_min).max(T::epsilon() / a_min);
    let mut doublings = 0;
    while phi(hi).0 > T::zero() {
        hi = hi + hi;
        doublings += 1;
        if doublings > 200 || !hi.is_finite() {
            return Err(Error::RootFinding("could not bracket the secular equation".into()));
        }
    }

    let mut lo = T::zero();
    let mut lam = T::zero();
    let mut converged = false;
    for _ in 0..(MAX_BISECTION_ITERS + MAX_NEWTON_ITERS) {
        let (f, df) = phi(lam);
        // ‖y‖_A = sqrt(f + 1)
        if ((f + T::one()).sqrt() - T::one()).abs() <= tol {
            converged = true;
            break;
        }
        if f > T::zero() {
            lo = lam;
        } else {
            hi = lam;
        }
        let newton = lam - f / df;
        lam = if df < T::zero() && newton > lo && newton < hi {
            newton
        } else {
            lo + (hi - lo) / T::lit(2.0)
        };
        if hi - lo <= T::epsilon() * hi {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::RootFinding("ellipsoid projection did not converge".into()));
    }

    let mut y: Vec<T> = x
        .iter()
        .zip(a)
        .map(|(&xj, &aj)| xj / (T::one() + lam * aj))
        .collect();
    let ny = mahalanobis_norm(&y, &e.metric)?;
    if ny > T::one() {
        y.iter_mut().for_each(|v| *v = *v / ny);
    }
    Ok(y)
}

/// Rescales `x` onto `E_A` along the ray through the origin: `x · min(1, 1/‖x‖_A)`.
///
/// Satisfies the same norm bound as [`project_onto_ellipsoid`] but is not the
/// Euclidean projection when the metric is anisotropic.
pub fn radial_clip<T: Scalar>(x: &[T], e: &Ellipsoid<T>) -> Result<Vec<T>> {
    let n = mahalanobis_norm(x, &e.metric)?;
    if n <= T::one() {
        return Ok(x.to_vec());
    }
    Ok(x.iter().map(|&v| v / n).collect())
}

/// `argmin_{y ∈ X} ‖y − x‖_H`.
///
/// Boxes are separable, so the clamp is exact for every diagonal `H`. For the
/// ball the minimizer is `y_j = H_jj x_j / (H_jj + λ)` with `λ ≥ 0` solving
/// `‖y(λ)‖₂ = R`.
pub fn project_domain<T: Scalar>(x: &[T], domain: &Domain<T>, h: &DiagonalMetric<T>) -> Result<Vec<T>> {
    check_vec(x, domain.dim, "project_domain input")?;
    check_dim(domain.dim, h.dim())?;
    let r = domain.radius;
    match domain.kind {
        DomainKind::InfinityBox => Ok(x.iter().map(|&v| v.max(-r).min(r)).collect()),
        DomainKind::L2Ball => {
            let nx = norm2_sq(x).sqrt();
            if nx <= r {
                return Ok(x.to_vec());
            }
            let hs = h.entries();
            if hs.windows(2).all(|w| w[0] == w[1]) {
                return Ok(x.iter().map(|&v| v * r / nx).collect());
            }
            let y_of = |lam: T| -> Vec<T> {
                x.iter()
                    .zip(hs)
                    .map(|(&xj, &hj)| hj * xj / (hj + lam))
                    .collect()
            };
            let h_max = hs.iter().copied().fold(T::zero(), T::max);
            let h_min = hs.iter().copied().fold(T::infinity(), T::min);
            let mut lo = T::zero();
            let mut hi = (h_max * nx / r - h_min).max(T::epsilon());
            while norm2_sq(&y_of(hi)) > r * r {
                hi = hi + hi;
                if !hi.is_finite() {
                    return Err(Error::RootFinding("could not bracket ball projection".into()));
                }
            }
            let tol = T::lit(DEFAULT_PROJECTION_TOL).max(T::tol_floor()) * r;
            for _ in 0..(MAX_BISECTION_ITERS + MAX_NEWTON_ITERS) {
                let mid = lo + (hi - lo) / T::lit(2.0);
                let ny = norm2_sq(&y_of(mid)).sqrt();
                if (ny - r).abs() <= tol || hi - lo <= T::epsilon() * hi {
                    lo = mid;
                    break;
                }
                if ny > r {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let mut y = y_of(lo);
            let ny = norm2_sq(&y).sqrt();
            if ny > r {
                y.iter_mut().for_each(|v| *v = *v * r / ny);
            }
            Ok(y)
        }
    }
}

/// Closed-form diameter `sup_{x,y ∈ X} ‖x − y‖` of the domain.
pub fn diameter<T: Scalar>(domain: &Domain<T>, which: DiameterNorm<'_, T>) -> Result<T> {
    let two_r = domain.radius + domain.radius;
    match (domain.kind, which) {
        (_, DiameterNorm::LInf) => Ok(two_r),
        (DomainKind::InfinityBox, DiameterNorm::L2) => {
            Ok(two_r * T::from_usize(domain.dim).unwrap().sqrt())
        }
        (DomainKind::L2Ball, DiameterNorm::L2) => Ok(two_r),
        (DomainKind::InfinityBox, DiameterNorm::InvMetric(c)) => {
            check_dim(domain.dim, c.dim())?;
            Ok(two_r * c.trace_inverse().sqrt())
        }
        (DomainKind::L2Ball, DiameterNorm::InvMetric(c)) => {
            check_dim(domain.dim, c.dim())?;
            Ok(two_r * c.max_inverse_sqrt())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn metric(v: &[f64]) -> DiagonalMetric<f64> {
        DiagonalMetric::new(v.to_vec()).unwrap()
    }

    /// Minimizes ‖y − x‖₂ over the boundary of a 2-D weighted set by a dense
    /// angular scan followed by golden-section refinement.
    fn boundary_scan_2d(x: [f64; 2], point_at: impl Fn(f64) -> [f64; 2]) -> [f64; 2] {
        let dist = |t: f64| {
            let p = point_at(t);
            (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)
        };
        let n = 200_000;
        let step = std::f64::consts::TAU / n as f64;
        let best = (0..n)
            .map(|i| i as f64 * step)
            .min_by(|a, b| dist(*a).partial_cmp(&dist(*b)).unwrap())
            .unwrap();
        let (mut a, mut b) = (best - step, best + step);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if dist(c) < dist(d) {
                b = d;
            } else {
                a = c;
            }
        }
        point_at((a + b) / 2.0)
    }

    #[test]
    fn norm_examples() {
        assert_eq!(mahalanobis_norm(&[3.0, 4.0], &metric(&[1.0, 1.0])).unwrap(), 5.0);
        assert_abs_diff_eq!(
            mahalanobis_norm(&[1.0, 1.0], &metric(&[4.0, 1.0])).unwrap(),
            5f64.sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn norm_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-5.0..5.0)).collect();
            let m: Vec<f64> = (0..8).map(|_| rng.random_range(0.01..10.0)).collect();
            let mut naive = 0.0;
            for j in 0..8 {
                naive += x[j] * m[j] * x[j];
            }
            assert_abs_diff_eq!(
                mahalanobis_norm(&x, &metric(&m)).unwrap(),
                naive.sqrt(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn norm_errors() {
        assert!(matches!(
            mahalanobis_norm(&[1.0], &metric(&[1.0, 1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            mahalanobis_norm(&[f64::NAN, 1.0], &metric(&[1.0, 1.0])),
            Err(Error::NonFinite(_))
        ));
        assert!(DiagonalMetric::new(vec![1.0, 0.0]).is_err());
        assert!(DiagonalMetric::<f64>::new(vec![]).is_err());
        assert!(DiagonalMetric::new(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn projection_examples() {
        let e = Ellipsoid::new(metric(&[1.0, 1.0]));
        assert_eq!(project_onto_ellipsoid(&[0.3, 0.4], &e, 1e-10).unwrap(), vec![0.3, 0.4]);
        let y = project_onto_ellipsoid(&[2.0, 0.0], &e, 1e-10).unwrap();
        assert_abs_diff_eq!(y[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(y[1], 0.0, epsilon = 1e-15);

        let e = Ellipsoid::new(metric(&[1.0, 4.0]));
        let y = project_onto_ellipsoid(&[2.0, 2.0], &e, 1e-10).unwrap();
        // boundary of E_A: (cos t, sin t / 2)
        let oracle = boundary_scan_2d([2.0, 2.0], |t| [t.cos(), t.sin() / 2.0]);
        assert_abs_diff_eq!(y[0], oracle[0], epsilon = 1e-6);
        assert_abs_diff_eq!(y[1], oracle[1], epsilon = 1e-6);
    }

    #[test]
    fn boundary_point_is_not_moved() {
        let e = Ellipsoid::new(metric(&[1.0, 4.0]));
        let x = [0.6, 0.4];
        assert_eq!(project_onto_ellipsoid(&x, &e, 1e-10).unwrap(), x.to_vec());
    }

    #[test]
    fn projection_f32() {
        let e = Ellipsoid::new(DiagonalMetric::new(vec![1.0f32, 4.0]).unwrap());
        let y = project_onto_ellipsoid(&[2.0f32, 2.0], &e, 1e-10).unwrap();
        let n = mahalanobis_norm(&y, &e.metric).unwrap();
        assert!(n <= 1.0 && n > 1.0 - 1e-4);
    }

    #[test]
    fn radial_clip_examples() {
        let e = Ellipsoid::new(metric(&[1.0, 1.0]));
        assert_eq!(radial_clip(&[0.1, 0.2], &e).unwrap(), vec![0.1, 0.2]);
        assert_eq!(radial_clip(&[2.0, 0.0], &e).unwrap(), vec![1.0, 0.0]);
        let e = Ellipsoid::new(metric(&[1.0, 4.0]));
        let y = radial_clip(&[2.0, 2.0], &e).unwrap();
        let s = 20f64.sqrt();
        assert_abs_diff_eq!(y[0], 2.0 / s, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], 2.0 / s, epsilon = 1e-15);
        let p = project_onto_ellipsoid(&[2.0, 2.0], &e, 1e-10).unwrap();
        assert!((p[0] - y[0]).abs() > 1e-3);
    }

    #[test]
    fn domain_projection_examples() {
        let h = metric(&[1.0, 4.0]);
        let cube = Domain::cube(1.0, 2).unwrap();
        assert_eq!(project_domain(&[0.5, -0.5], &cube, &h).unwrap(), vec![0.5, -0.5]);
        assert_eq!(project_domain(&[2.0, -0.5], &cube, &h).unwrap(), vec![1.0, -0.5]);

        let ball = Domain::ball(1.0, 2).unwrap();
        assert_eq!(project_domain(&[0.5, 0.5], &ball, &h).unwrap(), vec![0.5, 0.5]);
        let y = project_domain(&[2.0, 2.0], &ball, &h).unwrap();
        // minimize the H-weighted distance over the unit circle
        let hd = |p: [f64; 2]| (p[0] - 2.0).powi(2) + 4.0 * (p[1] - 2.0).powi(2);
        let n = 400_000;
        let mut best = [1.0, 0.0];
        for i in 0..n {
            let t = i as f64 / n as f64 * std::f64::consts::TAU;
            let p = [t.cos(), t.sin()];
            if hd(p) < hd(best) {
                best = p;
            }
        }
        assert_abs_diff_eq!(y[0], best[0], epsilon = 1e-4);
        assert_abs_diff_eq!(y[1], best[1], epsilon = 1e-4);
        // tighter check through the stationarity condition y_j = H x_j/(H + λ)
        let lam0 = 1.0 * 2.0 / y[0] - 1.0;
        let lam1 = 4.0 * 2.0 / y[1] - 4.0;
        assert_abs_diff_eq!(lam0, lam1, epsilon = 1e-6);
        assert_abs_diff_eq!(y[0].hypot(y[1]), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn diameter_examples() {
        let cube = Domain::cube(1.0, 4).unwrap();
        assert_eq!(diameter(&cube, DiameterNorm::L2).unwrap(), 4.0);
        assert_eq!(diameter(&cube, DiameterNorm::LInf).unwrap(), 2.0);
        let ball = Domain::ball(1.0, 3).unwrap();
        assert_eq!(diameter(&ball, DiameterNorm::L2).unwrap(), 2.0);
        assert_eq!(diameter(&ball, DiameterNorm::LInf).unwrap(), 2.0);
        let c = metric(&[1.0, 4.0]);
        assert_eq!(diameter(&ball.clone(), DiameterNorm::L2).unwrap(), 2.0);
        let ball2 = Domain::ball(1.0, 2).unwrap();
        assert_abs_diff_eq!(diameter(&ball2, DiameterNorm::InvMetric(&c)).unwrap(), 2.0);
    }

    #[test]
    fn box_inverse_metric_diameter_matches_corner_search() {
        let c = metric(&[1.0, 4.0]);
        let cube = Domain::cube(1.0, 2).unwrap();
        let closed = diameter(&cube, DiameterNorm::InvMetric(&c)).unwrap();
        assert_abs_diff_eq!(closed, 5f64.sqrt(), epsilon = 1e-15);
        let cinv = c.inverse();
        let corners = [[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]];
        let mut sup: f64 = 0.0;
        for p in &corners {
            for q in &corners {
                let d = [p[0] - q[0], p[1] - q[1]];
                sup = sup.max(mahalanobis_norm(&d, &cinv).unwrap());
            }
        }
        assert_abs_diff_eq!(sup, closed, epsilon = 1e-12);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..=8).prop_flat_map(|d| {
            (
                prop::collection::vec(-20.0f64..20.0, d),
                prop::collection::vec(0.01f64..50.0, d),
            )
        })
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_idempotent((x, a) in instance()) {
            let e = Ellipsoid::new(metric(&a));
            let y = project_onto_ellipsoid(&x, &e, 1e-10).unwrap();
            prop_assert!(mahalanobis_norm(&y, &e.metric).unwrap() <= 1.0 + 1e-10);
            let z = project_onto_ellipsoid(&y, &e, 1e-10).unwrap();
            for (u, v) in y.iter().zip(&z) {
                prop_assert!((u - v).abs() <= 1e-10);
            }
        }

        #[test]
        fn projection_scaling_equivariance((x, a) in instance(), s in 0.1f64..10.0) {
            // E_{sA} = E_A / sqrt(s), hence π_{sA}(x) = π_A(√s x) / √s
            let e = Ellipsoid::new(metric(&a));
            let es = Ellipsoid::new(metric(&a).scaled(s).unwrap());
            let lhs = project_onto_ellipsoid(&x, &es, 1e-12).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| v * s.sqrt()).collect();
            let rhs = project_onto_ellipsoid(&xs, &e, 1e-12).unwrap();
            for (u, v) in lhs.iter().zip(&rhs) {
                prop_assert!((u - v / s.sqrt()).abs() <= 1e-7 * (1.0 + u.abs()));
            }
        }

        #[test]
        fn ball_projection_is_feasible(
            (x, h) in instance(),
            r in 0.1f64..5.0,
        ) {
            let dom = Domain::ball(r, x.len()).unwrap();
            let y = project_domain(&x, &dom, &metric(&h)).unwrap();
            prop_assert!(dom.contains(&y, 1e-9));
        }
    }
}
