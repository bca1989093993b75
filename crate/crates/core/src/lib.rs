//! Differentially private stochastic optimization with ellipsoidal clipping
//! and anisotropic Gaussian noise.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common instantiations. The privacy accountant works in `f64`.

pub mod error;
pub mod geometry;
pub mod moments;
pub mod optimizers;
pub mod privacy;
pub mod problems;
pub mod scalar;
pub mod testkit;

pub use error::{Error, Result};
pub use geometry::{
    diameter, mahalanobis_norm, project_domain, project_onto_ellipsoid, radial_clip, DiagonalMetric,
    DiameterNorm, Domain, DomainKind, Ellipsoid,
};
pub use moments::{MomentEstimate, MomentSource};
pub use optimizers::{run, Algorithm, Clipper, OptConfig, StepRecord, Trace};
pub use privacy::{max_steps, noise_scale, AccountantLedger, NoiseSpec, PrivacyBudget};
pub use problems::{Dataset, LossKind, ProblemSpec};
pub use scalar::Scalar;

pub type Metric64 = DiagonalMetric<f64>;
pub type Metric32 = DiagonalMetric<f32>;
pub type Domain64 = Domain<f64>;
pub type Domain32 = Domain<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Problem64 = ProblemSpec<f64>;
pub type Problem32 = ProblemSpec<f32>;
pub type OptConfig64 = OptConfig<f64>;
pub type OptConfig32 = OptConfig<f32>;
pub type Trace64 = Trace<f64>;
pub type Trace32 = Trace<f32>;
