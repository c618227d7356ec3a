//! Power series of square matrices and their Fréchet differentials.
//!
//! The differential `g^[1](T)(h)` of a power series `g` at a matrix `T` can be
//! computed four ways: by differentiating each monomial directly, or through
//! three commutator expansions built on `C(T)h = hT − Th`. Each evaluation
//! reports how many terms it used and a bound on the neglected tail.

pub mod algebra;
pub mod cli;
pub mod error;
pub mod frechet;
pub mod identities;
pub mod json;
pub mod oracle;
mod quadrature;
pub mod series;

pub use algebra::{MatrixElement, Scalar, ScalarField};
pub use error::{Error, Result};
pub use frechet::{frechet, frechet_compare, Algorithm, CompareReport, DifferentialResult};
pub use series::{eval_matrix, BoundKind, EvalDiagnostics, PowerSeries, TruncationPolicy};
