use crate::error::{Error, Result};
use crate::topology::Topology;

/// A problem instance: a rooted tree with per-node attribute vectors and,
/// for training data, per-node labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTree {
    topology: Topology,
    attributes: Vec<Vec<f64>>,
    labels: Option<Vec<usize>>,
    tokens: Vec<Option<String>>,
}

impl LabeledTree {
    pub fn new(
        parent: Vec<Option<usize>>,
        attributes: Vec<Vec<f64>>,
        labels: Option<Vec<usize>>,
        tokens: Vec<Option<String>>,
    ) -> Result<Self> {
        let topology = Topology::from_parents(parent)?;
        Self::from_topology(topology, attributes, labels, tokens)
    }

    pub fn from_topology(
        topology: Topology,
        attributes: Vec<Vec<f64>>,
        labels: Option<Vec<usize>>,
        tokens: Vec<Option<String>>,
    ) -> Result<Self> {
        let n = topology.len();
        if attributes.len() != n || tokens.len() != n {
            return Err(Error::Data(format!(
                "tree has {n} nodes but {} attribute rows and {} token slots",
                attributes.len(),
                tokens.len()
            )));
        }
        let width = attributes[0].len();
        if let Some(v) = attributes.iter().position(|a| a.len() != width) {
            return Err(Error::Data(format!(
                "node {v} has {} attributes, node 0 has {width}",
                attributes[v].len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Data(format!("{} labels for {n} nodes", l.len())));
            }
        }
        Ok(LabeledTree {
            topology,
            attributes,
            labels,
            tokens,
        })
    }

    pub fn len(&self) -> usize {
        self.topology.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topology.is_empty()
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn attributes(&self) -> &[Vec<f64>] {
        &self.attributes
    }

    pub fn attr_size(&self) -> usize {
        self.attributes[0].len()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Labels, or a data error for unlabeled trees.
    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Data("tree has no labels".into()))
    }

    pub fn tokens(&self) -> &[Option<String>] {
        &self.tokens
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.topology.children(v).is_empty()
    }

    pub fn with_attributes(mut self, attributes: Vec<Vec<f64>>) -> Result<Self> {
        let labels = self.labels.take();
        let tokens = std::mem::take(&mut self.tokens);
        Self::from_topology(self.topology, attributes, labels, tokens)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }
}

/// A collection of trees sharing one label count and attribute width.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub num_labels: usize,
    pub trees: Vec<LabeledTree>,
}

impl Dataset {
    pub fn new(num_labels: usize, trees: Vec<LabeledTree>) -> Result<Self> {
        let ds = Dataset { num_labels, trees };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_labels < 2 {
            return Err(Error::Data(format!(
                "need at least 2 labels, got {}",
                self.num_labels
            )));
        }
        let width = self.trees.first().map(LabeledTree::attr_size);
        for (i, t) in self.trees.iter().enumerate() {
            if Some(t.attr_size()) != width {
                return Err(Error::Data(format!(
                    "tree {i} has attribute size {}, tree 0 has {}",
                    t.attr_size(),
                    width.unwrap_or(0)
                )));
            }
            if let Some(bad) = t.labels().and_then(|l| l.iter().find(|&&y| y >= self.num_labels)) {
                return Err(Error::Data(format!(
                    "tree {i} has label {bad}, but only {} labels exist",
                    self.num_labels
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn attr_size(&self) -> Option<usize> {
        self.trees.first().map(LabeledTree::attr_size)
    }

    pub fn num_nodes(&self) -> usize {
        self.trees.iter().map(LabeledTree::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_attributes_and_bad_labels() {
        let err = LabeledTree::new(
            vec![None, Some(0)],
            vec![vec![1.0], vec![1.0, 2.0]],
            None,
            vec![None, None],
        )
        .unwrap_err();
        assert!(err.to_string().contains("node 1"), "{err}");

        let t = LabeledTree::new(vec![None], vec![vec![0.0]], Some(vec![3]), vec![None]).unwrap();
        assert!(Dataset::new(3, vec![t.clone()]).is_err());
        assert!(Dataset::new(4, vec![t]).is_ok());
    }
}
