use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The clamped evidence of some frame has probability zero under the model.
    #[error("zero evidence in video `{video_id}` at frame {frame_index}")]
    ZeroEvidence { video_id: String, frame_index: u64 },

    #[error("invalid parameters: {}", format_violations(.0))]
    InvalidParams(Vec<Violation>),

    #[error("label space does not fit model kind: {0}")]
    KindMismatch(String),

    #[error("invalid video `{video_id}`: {reason}")]
    InvalidVideo { video_id: String, reason: String },

    #[error("no videos supplied")]
    EmptyDataset,

    #[error("no labelled frames available")]
    NoLabelledData,

    #[error("brute-force enumeration over {assignments:.3e} assignments exceeds the guard")]
    TooLarge { assignments: f64 },

    #[error("no positive truths; recall is undefined")]
    NoPositives,

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("{path}:{line}: frame_idx {frame_index} is not strictly increasing")]
    Order {
        path: PathBuf,
        line: u64,
        frame_index: u64,
    },

    #[error("{path}: {}", format_violations(.violations))]
    Validation {
        path: PathBuf,
        violations: Vec<Violation>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Numeric failures are reported separately from malformed input by the CLI.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::ZeroEvidence { .. })
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
