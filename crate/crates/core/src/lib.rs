//! Wasserstein statistics for elliptically symmetric location-scatter models
//! `p(x; μ, Λ) = |Λ| g(‖Λ(x − μ)‖)`.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! `*F64` / `*F32` aliases below fix the precision for callers that do not
//! care.

pub mod divergences;
pub mod efficiency;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod shapes;
pub mod wscore;

pub use divergences::{
    empirical_w2_1d, gelbrich_w2, shift_decomposition_check, DivergenceValue, ShiftDecomposition,
};
pub use efficiency::{
    estimator_sampling_covariance, fisher_info_mc, noise_robustness, w_covariance, wcr_bound_check,
    BoundCheck, RobustnessReport, SamplingCovariance, StatisticFn,
};
pub use error::{Error, Result};
pub use estimators::{
    mle_estimate, w_estimate, wp_estimate_1d, EstimatorReport, Method, MleOptions,
};
pub use linalg::{spd_inv_sqrt, spd_sqrt, sylvester_solve, sym_eig, SpdMatrix, SymEig, SymMatrix};
pub use mc::McMatrix;
pub use model::{AffineParams, ParamIndex};
pub use scalar::Scalar;
pub use shapes::{ShapeDistribution, ShapeKind, StandardizationReport};
pub use wscore::{w_info_matrix, w_info_matrix_mc, wscore_lambda, wscore_mu, QuadraticScore};

/// Version of this library, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type SymMatrixF64 = SymMatrix<f64>;
pub type SpdMatrixF64 = SpdMatrix<f64>;
pub type ShapeF64 = ShapeDistribution<f64>;
pub type AffineParamsF64 = AffineParams<f64>;
pub type QuadraticScoreF64 = QuadraticScore<f64>;
pub type EstimatorReportF64 = EstimatorReport<f64>;
pub type StatisticFnF64 = StatisticFn<f64>;

pub type SymMatrixF32 = SymMatrix<f32>;
pub type SpdMatrixF32 = SpdMatrix<f32>;
pub type ShapeF32 = ShapeDistribution<f32>;
pub type AffineParamsF32 = AffineParams<f32>;
pub type QuadraticScoreF32 = QuadraticScore<f32>;
