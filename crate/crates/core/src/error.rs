use thiserror::Error;

/// Errors raised by the deconvolution library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate projection: cannot normalise a zero vector{}", hint_suffix(.0))]
    DegenerateProjection(Option<String>),

    #[error("point is not on the unit sphere (norm {norm:.3e})")]
    NotNormalized { norm: f64 },

    #[error("direction is not tangent at the base point (inner product {inner:.3e})")]
    NotTangent { inner: f64 },

    #[error("antipodal points: log map is undefined")]
    Antipodal,

    #[error("prox root-finder did not converge for entry {index} (z = {z})")]
    ProxNonConvergence { index: usize, z: f64 },

    #[error("eigensolver hit its iteration cap ({iterations}) with residual {residual:.3e}")]
    EigenNonConvergence {
        iterations: usize,
        residual: f64,
        best_value: f64,
        best_vector: Vec<f64>,
    },

    #[error("degenerate sparse map: normal matrix condition number {condition:.3e}")]
    DegenerateSparseMap { condition: f64 },

    #[error("outside shift span: residual {residual:.3e}")]
    OutsideShiftSpan { residual: f64 },

    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn hint_suffix(hint: &Option<String>) -> String {
    match hint {
        Some(h) => format!(" ({h})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
