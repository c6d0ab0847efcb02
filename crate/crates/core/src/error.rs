use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm {norm:e} is too small to normalize")]
    ZeroVector { norm: f64 },

    #[error("vector contains a non-finite entry at position {index}")]
    NonFinite { index: usize },

    #[error("row {row} has norm {norm}, expected unit length")]
    NotUnitNorm { row: usize, norm: f64 },

    #[error("{path}: bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic {
        path: PathBuf,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("dimension mismatch: expected {expected}, got {found}{}", context_suffix(.context))]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: String,
    },

    #[error("{path}: truncated file, expected {expected} bytes of payload, found {found}")]
    TruncatedFile {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("{path}: {found} labels for {expected} feature rows")]
    LabelCountMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid template {template_id}: {reason}")]
    InvalidTemplate { template_id: u64, reason: String },

    #[error("unknown template id {0}")]
    UnknownTemplate(u64),

    #[error("invalid pair protocol: {0}")]
    InvalidProtocol(String),

    #[error("need more than {d_out} samples for a {d_out}-component PCA, got {n}")]
    InsufficientData { n: usize, d_out: usize },

    #[error("no class has at least two samples; cannot draw an anchor/positive pair")]
    NoValidAnchor,

    #[error("every row shares label {label}; no negatives available")]
    NoNegatives { label: u64 },

    #[error("invalid triplet ({a}, {p}, {n}): {reason}")]
    InvalidTriplet {
        a: usize,
        p: usize,
        n: usize,
        reason: &'static str,
    },

    #[error("projection has zero norm; cosine score undefined")]
    ZeroProjection,

    #[error("score set has an empty {0} list")]
    EmptyScores(&'static str),

    #[error("gallery is empty")]
    EmptyGallery,

    #[error("no probes left after closed-set filtering")]
    EmptyProbeSet,

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

impl Error {
    pub(crate) fn dim(expected: usize, found: usize, context: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            expected,
            found,
            context: context.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the failure came from the operating system (open/read/write)
    /// rather than from the content of the inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
