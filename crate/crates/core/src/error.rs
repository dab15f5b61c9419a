use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unknown endeffector `{0}`")]
    UnknownEndeffector(String),

    #[error("invalid robot model: {0}")]
    InvalidModel(String),

    #[error("contact constraint rows {rows:?} are rank deficient with an inconsistent right-hand side")]
    RankDeficient { rows: Vec<usize> },

    #[error("operating point violates the contact constraint (|J v| = {residual:.3e})")]
    InconsistentOperatingPoint { residual: f64 },

    #[error("pair is not stabilizable; uncontrollable unstable eigenvalues: {}", fmt_eigs(.eigenvalues))]
    Unstabilizable { eigenvalues: Vec<(f64, f64)> },

    #[error("LQR synthesis failed: {0}")]
    Synthesis(String),

    #[error("no keyframe controller matches the estimated contact set {0}")]
    NoMatchingKeyframe(String),

    #[error("inverse kinematics target unreachable (task residual {residual:.3e})")]
    UnreachableTarget { residual: f64 },

    #[error("{}: {message}", .path.display())]
    Config { path: PathBuf, message: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn fmt_eigs(e: &[(f64, f64)]) -> String {
    e.iter()
        .map(|(re, im)| format!("{re:.4}{im:+.4}i"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn config(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, got })
    }
}
