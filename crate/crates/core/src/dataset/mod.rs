//! Annotation and prediction files, and the group / set / split structure of the dataset.

mod coco;
mod index;
mod predictions;
mod split;

use std::path::{Path, PathBuf};

pub use coco::{
    AnnotationAttributes, CocoAnnotation, CocoCategory, CocoFile, CocoImage, ImageAttributes,
    PredictionRecord, SetKind,
};
pub use index::{
    load_dataset, load_dataset_with, Category, DatasetIndex, DatasetSummary, GtInstance,
    ImageRecord, LoadOptions,
};
pub use predictions::{load_predictions, predictions_from_records, write_predictions, Prediction};
pub use split::{select, Regime, Selection, SplitConfig};

use crate::maskops::MaskError;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },
    #[error("{location}: {source}")]
    Mask {
        location: String,
        #[source]
        source: MaskError,
    },
    #[error("group {0} is not present in the dataset")]
    UnknownGroup(u32),
    #[error("test and validation groups overlap: {0:?}")]
    OverlappingSplit(Vec<u32>),
}

impl DatasetError {
    pub(crate) fn invalid(location: impl Into<String>, message: impl Into<String>) -> Self {
        DatasetError::Invalid {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Prefixes the location with the file it came from.
    pub(crate) fn in_file(self, path: &Path) -> Self {
        let at = |loc: String| format!("{}: {loc}", path.display());
        match self {
            DatasetError::Invalid { location, message } => DatasetError::Invalid {
                location: at(location),
                message,
            },
            DatasetError::Mask { location, source } => DatasetError::Mask {
                location: at(location),
                source,
            },
            other => other,
        }
    }
}

/// Reads and parses a JSON file, reporting the path on failure.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| DatasetError::Parse {
        path: path.to_path_buf(),
        source,
    })
}
