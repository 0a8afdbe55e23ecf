//! On-disk formats: JSON documents for schedules, priors and tasks, PGM
//! images and CSV vectors.

mod formats;
mod prior;
mod schedule;
mod task;

pub use formats::{parse_csv_vector, read_pgm, read_vector, write_csv_vector, write_pgm, Image};
pub use prior::{PartDoc, PriorDoc};
pub use schedule::ScheduleDoc;
pub use task::{BuiltTask, TaskDoc};

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid document: {0}")]
    Invalid(String),
    #[error(transparent)]
    Schedule(#[from] crate::schedules::ScheduleError),
    #[error(transparent)]
    Prior(#[from] crate::priors::PriorError),
    #[error(transparent)]
    Observation(#[from] crate::observations::ObservationError),
}

pub(crate) fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse { path: path.to_path_buf(), message: e.to_string() })
}

/// A document given inline or as a path relative to the referencing file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

impl<T: DeserializeOwned + Clone> Source<T> {
    /// The document and the directory further relative paths resolve against.
    pub fn resolve(&self, base: &Path) -> Result<(T, PathBuf), IoError> {
        match self {
            Source::Inline(doc) => Ok((doc.clone(), base.to_path_buf())),
            Source::Path(p) => {
                let path = base.join(p);
                let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
                Ok((load_json(&path)?, dir))
            }
        }
    }
}
