use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

use super::LabeledTree;

/// Token-to-vector table read from whitespace-separated text
/// (`token v1 v2 … vD`, one entry per line).
#[derive(Clone, Debug, Default)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
}

impl EmbeddingTable {
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut table = EmbeddingTable::default();
        for (i, (token, vector)) in entries.into_iter().enumerate() {
            table.insert(i + 1, token.into(), &vector)?;
        }
        if table.index.is_empty() {
            return Err(Error::format(0, "no embedding entries"));
        }
        Ok(table)
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut table = EmbeddingTable::default();
        let mut values = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::format(lineno, e.to_string()))?;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            values.clear();
            for f in fields {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::format(lineno, format!("`{f}` is not a number")))?;
                values.push(v);
            }
            table.insert(lineno, token.to_owned(), &values)?;
        }
        if table.index.is_empty() {
            return Err(Error::format(0, "embedding file has no entries"));
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file)).map_err(|e| match e {
            Error::Format { line, message } => Error::Format {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })
    }

    fn insert(&mut self, line: usize, token: String, vector: &[f64]) -> Result<()> {
        if vector.is_empty() {
            return Err(Error::format(line, format!("token `{token}` has no values")));
        }
        if self.index.is_empty() {
            self.dim = vector.len();
        } else if vector.len() != self.dim {
            return Err(Error::format(
                line,
                format!("expected {} values, found {}", self.dim, vector.len()),
            ));
        }
        if !self.index.contains_key(&token) {
            self.index.insert(token, self.index.len());
            self.vectors.extend_from_slice(vector);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }
}

/// Replaces node attributes with embedding lookups.
///
/// Leaves use the lowercased token's vector followed by a `1` indicator.
/// Internal nodes and unknown tokens get zeros followed by `0`, so every
/// attribute has `dim + 1` entries.
pub fn attach_attributes(tree: LabeledTree, table: &EmbeddingTable) -> LabeledTree {
    let dim = table.dim();
    let attributes = (0..tree.len())
        .map(|v| {
            let found = if tree.is_leaf(v) {
                tree.tokens()[v]
                    .as_deref()
                    .and_then(|t| table.get(&t.to_lowercase()))
            } else {
                None
            };
            let mut row = Vec::with_capacity(dim + 1);
            match found {
                Some(vec) => {
                    row.extend_from_slice(vec);
                    row.push(1.0);
                }
                None => {
                    row.resize(dim, 0.0);
                    row.push(0.0);
                }
            }
            row
        })
        .collect();
    tree.with_attributes(attributes)
        .expect("attribute rows are uniform by construction")
}
