use thiserror::Error;

/// Errors raised by matrix, series and differential operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("scalar field mismatch: {0} vs {1}")]
    FieldMismatch(&'static str, &'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("norm {norm} is outside the convergence ball of radius {radius}")]
    OutsideRadius { norm: f64, radius: f64 },

    /// The derivative-series expansion is only guaranteed on the ball of radius R/3.
    #[error("norm {norm} is outside the ball of radius R/3 = {limit} required by the derivative-series expansion")]
    OutsideThirdRadius { norm: f64, limit: f64 },

    #[error("unknown builtin series '{0}'")]
    UnknownSeries(String),

    #[error("parameter t = {t} outside the curve domain ({lo}, {hi})")]
    OutsideDomain { t: f64, lo: f64, hi: f64 },

    #[error("matrix is singular")]
    Singular,

    #[error("malformed json: {0}")]
    MalformedJson(String),
}

impl Error {
    /// Stable machine-readable code used in CLI error objects.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(..) => "dimension_mismatch",
            Error::FieldMismatch(..) => "field_mismatch",
            Error::InvalidInput(_) => "invalid_input",
            Error::OutsideRadius { .. } => "outside_radius",
            Error::OutsideThirdRadius { .. } => "outside_r3_ball",
            Error::UnknownSeries(_) => "unknown_series",
            Error::OutsideDomain { .. } => "outside_domain",
            Error::Singular => "singular",
            Error::MalformedJson(_) => "malformed_json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
