//! Versioned JSON form of attributed datasets, so trees need not be
//! re-parsed and re-embedded on every run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Dataset, LabeledTree};

pub const DATASET_FORMAT: &str = "nft-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format: String,
    version: u32,
    num_labels: usize,
    trees: Vec<TreeRecord>,
}

#[derive(Serialize, Deserialize)]
struct TreeRecord {
    parent: Vec<Option<usize>>,
    labels: Option<Vec<usize>>,
    tokens: Vec<Option<String>>,
    attributes: Vec<Vec<f64>>,
}

pub fn dataset_to_json(dataset: &Dataset) -> String {
    let file = DatasetFile {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        num_labels: dataset.num_labels,
        trees: dataset
            .trees
            .iter()
            .map(|t| TreeRecord {
                parent: t.topology().parents().to_vec(),
                labels: t.labels().map(<[usize]>::to_vec),
                tokens: t.tokens().to_vec(),
                attributes: t.attributes().to_vec(),
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("dataset serializes")
}

pub fn dataset_from_json(text: &str) -> Result<Dataset> {
    let file: DatasetFile = serde_json::from_str(text).map_err(|e| Error::Format {
        line: e.line(),
        message: e.to_string(),
    })?;
    if file.format != DATASET_FORMAT || file.version != DATASET_VERSION {
        return Err(Error::format(
            1,
            format!(
                "expected {DATASET_FORMAT} v{DATASET_VERSION}, found {} v{}",
                file.format, file.version
            ),
        ));
    }
    let trees = file
        .trees
        .into_iter()
        .map(|r| LabeledTree::new(r.parent, r.attributes, r.labels, r.tokens))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(file.num_labels, trees)
}

pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    fs::write(path, dataset_to_json(dataset)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    dataset_from_json(&text).map_err(|e| match e {
        Error::Format { line, message } => Error::Format {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}
