use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("pose track is empty")]
    EmptyTrack,
    #[error("pose timestamps not strictly increasing at sample {index}")]
    NonMonotonic { index: usize },
    #[error("time {t} outside pose track span [{first}, {last}]")]
    OutOfRange { t: f64, first: f64, last: f64 },
    #[error("pose gap of {gap} s around t = {t} exceeds the allowed maximum")]
    GapTooLarge { t: f64, gap: f64 },
}

/// File-format and filesystem errors for datasets, configs and exports.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{path}:{line}: malformed record: {content:?}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        content: String,
    },
    #[error("{path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            return IoError::MissingFile(path.to_path_buf());
        }
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn malformed(path: &Path, line: usize, content: &str) -> Self {
        IoError::MalformedRecord {
            path: path.to_path_buf(),
            line,
            content: content.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{source_name}:{line}: unknown key `{key}`")]
    UnknownKey {
        source_name: String,
        line: usize,
        key: String,
    },
    #[error("{source_name}:{line}: expected `key = value`, got {content:?}")]
    Syntax {
        source_name: String,
        line: usize,
        content: String,
    },
    #[error("{source_name}:{line}: invalid value for `{key}`: {reason}")]
    BadValue {
        source_name: String,
        line: usize,
        key: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SegError {
    #[error("prior window contains no candidate points")]
    NoCandidates,
    #[error("point set is degenerate for plane fitting")]
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TerrainError {
    #[error("control lattice is empty")]
    EmptyLattice,
    #[error("need at least {needed} control points, have {have}")]
    TooFewPoints { needed: usize, have: usize },
    #[error("least-squares system is rank deficient")]
    RankDeficient,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("frame {frame}: {failed} of {total} returns could not be registered: {first}")]
    Registration {
        frame: u64,
        failed: usize,
        total: usize,
        first: GeometryError,
    },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
}
