//! Adaptive sparse canonical correlation analysis with matrix trace-Lasso
//! regularization.
//!
//! The estimator solves
//!
//! ```text
//! min  1/2 ||XU - YV||_F^2 + lambda_u ||A_X(U)||_* + lambda_v ||A_Y(V)||_*
//! s.t. U^T X^T X U = I_r,  V^T Y^T Y V = I_r
//! ```
//!
//! with a manifold inexact augmented Lagrangian method ([`alm`]) whose
//! subproblems are minimized by a Riemannian Barzilai-Borwein method
//! ([`rbb`]) on a product of generalized Stiefel manifolds ([`manifold`]).
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the usual double-precision instantiation.

pub mod alm;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod manifold;
pub mod problem;
pub mod rbb;
pub mod scalar;
pub mod select;
pub mod simulate;
pub mod tracelasso;

pub use error::{AsccaError, Result};
pub use scalar::Scalar;

/// Dense double-precision matrix.
pub type Mat = nalgebra::DMatrix<f64>;
pub type Metric = manifold::MetricMatrix<f64>;
pub type Point = manifold::GStiefelPoint<f64>;
pub type Product = manifold::ProductPoint<f64>;
pub type Data = problem::DataPair<f64>;
pub type Problem = problem::AsccaProblem<f64>;
pub type Solution = alm::AsccaSolution<f64>;
pub type AlmSettings = alm::AlmConfig<f64>;
pub type RbbSettings = rbb::RbbConfig<f64>;
pub type Truth = simulate::GroundTruth<f64>;

/// Single-precision instantiations.
pub type Mat32 = nalgebra::DMatrix<f32>;
pub type Problem32 = problem::AsccaProblem<f32>;
pub type Solution32 = alm::AsccaSolution<f32>;
