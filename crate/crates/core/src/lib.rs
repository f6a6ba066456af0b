//! Minimum Rényi-pseudodistance estimation, Wald-type inference and robustness
//! diagnostics for polytomous logistic regression.
//!
//! Coefficients are stored category-major: `β = (β_1ᵀ, …, β_dᵀ)ᵀ` with the last
//! category as reference, and every Kronecker product `v ⊗ x` uses the same layout.

pub mod asymptotics;
pub mod distributions;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod model;
pub mod robustness;
pub mod simulation;
pub mod tuning;

pub use error::{Error, Result};
pub use estimation::{classify, fit, fit_path, FitOptions, FitResult, Initializer};
pub use model::{Coefficients, DesignMatrix, ProbVector, ResponseMatrix, TuningAlpha};
