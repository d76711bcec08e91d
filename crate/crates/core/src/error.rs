use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A linear solve or eigensolve did not produce a usable result.
    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("degenerate covariance kernel: leading eigenvalue {0} is not positive")]
    DegenerateKernel(f64),

    /// Every update weight underflowed: the two consecutive measures
    /// cannot be bridged with the current particle set.
    #[error("numerically singular update{}: {detail}", singular_context(*.level, *.beta))]
    NumericallySingular {
        /// 1-based level being entered, when known.
        level: Option<usize>,
        beta: Option<f64>,
        detail: String,
    },

    #[error(
        "bridging from level {from} to level {to} at beta = {beta} exceeded {cap} intermediate steps (zeta = {zeta})"
    )]
    BridgingCapExceeded {
        from: usize,
        to: usize,
        beta: f64,
        zeta: f64,
        cap: usize,
    },

    /// A relative metric was requested against a zero reference.
    #[error("undefined reference: {0}")]
    UndefinedReference(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn singular_context(level: Option<usize>, beta: Option<f64>) -> String {
    match (level, beta) {
        (Some(l), Some(b)) => format!(" at level {l}, beta = {b}"),
        (Some(l), None) => format!(" at level {l}"),
        (None, Some(b)) => format!(" at beta = {b}"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub(crate) fn singular(detail: impl Into<String>) -> Self {
        Error::NumericallySingular {
            level: None,
            beta: None,
            detail: detail.into(),
        }
    }

    /// Attaches the level and inverse temperature to a singularity signal.
    pub fn with_context(self, level: usize, beta: f64) -> Self {
        match self {
            Error::NumericallySingular { detail, .. } => Error::NumericallySingular {
                level: Some(level),
                beta: Some(beta),
                detail,
            },
            other => other,
        }
    }

    /// True for failures caused by weight degeneracy rather than bad input.
    pub fn is_degeneracy(&self) -> bool {
        matches!(
            self,
            Error::NumericallySingular { .. } | Error::BridgingCapExceeded { .. }
        )
    }
}
