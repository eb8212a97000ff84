//! Trees, treebank ingestion, embeddings, and synthetic planted data.

mod cache;
mod embeddings;
mod planted;
mod ptb;
mod split;
mod tree;

use std::path::Path;

pub use cache::{dataset_from_json, dataset_to_json, load_dataset, save_dataset};
pub use embeddings::{attach_attributes, EmbeddingTable};
pub use planted::{generate_planted, Planted, PlantedConfig};
pub use ptb::{parse_ptb, parse_ptb_with_labels, read_ptb_file, serialize_ptb, SST_LABELS};
pub use split::{split, Splits};
pub use tree::{Dataset, LabeledTree};

use crate::error::{Error, Result};

/// Loads a dataset cache, or a treebank file (one bracketed tree per line)
/// embedded with `embeddings`.
pub fn load_any(path: &Path, embeddings: Option<&EmbeddingTable>) -> Result<Dataset> {
    let head = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let first = head.iter().find(|b| !b.is_ascii_whitespace()).copied();
    if first != Some(b'(') {
        return load_dataset(path);
    }
    let table = embeddings.ok_or_else(|| {
        Error::Config(format!(
            "{} is a treebank file; an embedding table is required",
            path.display()
        ))
    })?;
    let trees = read_ptb_file(path, SST_LABELS)?
        .into_iter()
        .map(|t| attach_attributes(t, table))
        .collect();
    Dataset::new(SST_LABELS, trees)
}
