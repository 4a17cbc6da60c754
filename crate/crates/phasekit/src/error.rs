//! Crate-wide error type.

use thiserror::Error;

/// Everything that can go wrong across the crate.
///
/// The command-line driver maps these onto process exit codes via
/// [`Error::exit_code`]; library callers can match on the variants directly.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed JSON, schema mismatch, or bad command-line arguments.
    #[error("malformed input: {0}")]
    Parse(String),

    /// Input is well-formed but mathematically outside the supported domain.
    #[error("{0}")]
    Domain(String),

    /// A check ran to completion but its residual exceeded the tolerance.
    #[error("tolerance exceeded: {0}")]
    Tolerance(String),

    /// A linear system or pairing matrix turned out singular.
    #[error("singular matrix in {0}")]
    Singular(&'static str),

    /// An iterative solver stalled.
    #[error("iteration failed to converge in {0}")]
    NoConvergence(&'static str),

    /// An analytic-continuation path runs too close to a branch point.
    #[error("path passes too close to a branch point (clearance {0:.3e})")]
    PathTooClose(f64),

    /// A continuation path meets the cut tangentially or ends on it, so the
    /// crossing side cannot be decided.  Perturb the path and retry.
    #[error("path touches a branch cut tangentially; perturb the path")]
    AmbiguousCrossing,

    /// A deformation step would cross or graze the discriminant.
    #[error("step passes too close to the discriminant")]
    NearDiscriminant,

    /// Critical values collide along the deformation, so root tracking
    /// cannot keep the labelling.
    #[error("critical values collide along the path (min gap {0:.3e})")]
    MultipleRoot(f64),

    /// Eigenvalue clustering produced an inconsistent spectral split.
    #[error("spectral decomposition failed to split the spectrum cleanly")]
    SpectralSplit,

    /// Requested truncation weight exceeds the supported range.
    #[error("truncation weight {0} too large")]
    TruncationTooLarge(usize),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code used by the `phasekit` binary: 2 for parse-level problems,
    /// 4 for checks that ran but missed tolerance, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Json(_) | Error::Io(_) => 2,
            Error::Tolerance(_) => 4,
            _ => 3,
        }
    }
}
