use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("unknown trace identity `{0}`")]
    UnknownTraceIdentity(String),

    #[error("hermitian eigensolver did not converge (dim {0})")]
    EigenNonConvergence(usize),

    #[error(
        "degenerate spectrum: levels {m} and {n} are {gap:.3e} apart but coupled by {coupling:.3e}"
    )]
    DegenerateSpectrum {
        m: usize,
        n: usize,
        gap: f64,
        coupling: f64,
    },

    #[error("trace has imaginary residue {0:.3e}")]
    ImaginaryResidue(f64),

    #[error("closed form unavailable: {0}")]
    ClosedFormUnavailable(String),

    #[error("closed form is singular: {0}")]
    SingularClosedForm(&'static str),

    #[error("norm drift {drift:.3e} at t = {t} exceeds tolerance; reduce the step")]
    NormDrift { t: f64, drift: f64 },

    #[error("unknown correction scheme `{0}`")]
    UnknownScheme(String),

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidBasis(_) => "invalid_basis",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::UnknownTraceIdentity(_) => "unknown_trace_identity",
            Error::EigenNonConvergence(_) => "eigen_non_convergence",
            Error::DegenerateSpectrum { .. } => "degenerate_spectrum",
            Error::ImaginaryResidue(_) => "imaginary_residue",
            Error::ClosedFormUnavailable(_) => "closed_form_unavailable",
            Error::SingularClosedForm(_) => "singular_closed_form",
            Error::NormDrift { .. } => "norm_drift",
            Error::UnknownScheme(_) => "unknown_scheme",
            Error::Config { .. } => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
