//! Self-tuning instrumental variables (STIV) estimation for high-dimensional
//! linear models with endogenous regressors.
//!
//! The solvers in [`cone`] and the dense linear algebra are generic over the
//! floating point type; the statistical layers work in `f64`.

pub mod cli;
pub mod cone;
pub mod data;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod normal;
pub mod nv;
pub mod stiv;
pub mod two_stage;
pub mod scalar;
pub mod sens;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ConeProgramF64 = cone::ConeProgram<f64>;
pub type ConeProgramF32 = cone::ConeProgram<f32>;
pub type SolutionF64 = cone::Solution<f64>;
pub type SolutionF32 = cone::Solution<f32>;
pub type MatF64 = linalg::Mat<f64>;
pub type MatF32 = linalg::Mat<f32>;
