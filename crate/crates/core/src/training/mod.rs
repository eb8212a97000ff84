//! Log-likelihood training of the GNN and factor heads.
//!
//! The gradient of a tree's negative log-likelihood with respect to each
//! log-potential entry is `marginal - indicator(observed)`. Those values
//! are injected at the head outputs and backpropagated through the heads
//! and the GNN, so the tape never records the inference passes.

mod adam;
mod checkpoint;
mod train;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_HEADER};
pub use train::{train, EpochRecord, TrainConfig, TrainingLog};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Dataset, LabeledTree};
use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::factors::{build_crf, FactorVars, HeadParams, HeadWeights, TreeCrf};
use crate::gnn::{embed, GnnConfig, GnnParams, GnnWeights};
use crate::inference::{log_partition, map_decode, marginals};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub gnn: GnnConfig,
    pub num_labels: usize,
    /// Independent-label baseline: the edge head is unused and every edge
    /// table is zero.
    pub baseline: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.gnn.validate()?;
        if self.num_labels < 2 {
            return Err(Error::Config(format!(
                "need at least 2 labels, got {}",
                self.num_labels
            )));
        }
        Ok(())
    }
}

/// Every trainable tensor of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights<T> {
    pub gnn: GnnWeights<T>,
    pub heads: HeadWeights<T>,
}

pub type ModelParams = ModelWeights<Tensor>;

impl<T> ModelWeights<T> {
    pub fn fields(&self) -> Vec<(String, &T)> {
        let gnn = self.gnn.fields().into_iter().map(|(n, t)| (format!("gnn.{n}"), t));
        let heads = self.heads.fields().into_iter().map(|(n, t)| (format!("heads.{n}"), t));
        gnn.chain(heads).collect()
    }

    pub fn fields_mut(&mut self) -> Vec<(String, &mut T)> {
        let gnn = self.gnn.fields_mut().into_iter().map(|(n, t)| (format!("gnn.{n}"), t));
        let heads = self
            .heads
            .fields_mut()
            .into_iter()
            .map(|(n, t)| (format!("heads.{n}"), t));
        gnn.chain(heads).collect()
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ModelWeights<U> {
        ModelWeights {
            gnn: self.gnn.map(|_, t| f(t)),
            heads: self.heads.map(|_, t| f(t)),
        }
    }
}

impl ModelParams {
    /// Seeded uniform initialization in `[-1/sqrt(h), 1/sqrt(h)]`.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gnn = GnnParams::init(&cfg.gnn, &mut rng);
        let heads = HeadParams::init(cfg.gnn.hidden_size, cfg.num_labels, &mut rng);
        ModelWeights { gnn, heads }
    }

    /// All-zero weights: every factor is uniform.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        ModelWeights {
            gnn: GnnParams::zeros(&cfg.gnn),
            heads: HeadParams::zeros(cfg.gnn.hidden_size, cfg.num_labels),
        }
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|t| Tensor::zeros(t.shape().to_vec()))
    }

    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        self.gnn.check_shapes(&cfg.gnn)?;
        self.heads.check_shapes(cfg.gnn.hidden_size, cfg.num_labels)
    }

    pub fn bind(&self, tape: &mut Tape) -> ModelWeights<Var> {
        ModelWeights {
            gnn: self.gnn.bind(tape),
            heads: self.heads.bind(tape),
        }
    }

    /// `self += scale * other`, entrywise.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for ((_, a), (_, b)) in self.fields_mut().into_iter().zip(other.fields()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += scale * y;
            }
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.fields().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Records embeddings and factor tables for `tree` on `tape`.
pub fn forward(
    tape: &mut Tape,
    weights: &ModelWeights<Var>,
    tree: &LabeledTree,
    cfg: &ModelConfig,
) -> Result<(TreeCrf, FactorVars)> {
    let emb = embed(tape, tree, &weights.gnn, &cfg.gnn)?;
    build_crf(tape, tree, emb, &weights.heads, !cfg.baseline)
}

/// The Gibbs distribution the model assigns to `tree`.
pub fn predict_crf(params: &ModelParams, tree: &LabeledTree, cfg: &ModelConfig) -> Result<TreeCrf> {
    let mut tape = Tape::new();
    let weights = params.bind(&mut tape);
    Ok(forward(&mut tape, &weights, tree, cfg)?.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeNll {
    /// `log Z - Σ log φ(observed)`.
    pub nll: f64,
    /// `nll / |V|`.
    pub per_node: f64,
}

impl TreeNll {
    fn new(nll: f64, nodes: usize) -> Self {
        TreeNll {
            nll,
            per_node: nll / nodes as f64,
        }
    }
}

fn observed_nll(crf: &TreeCrf, labels: &[usize], log_z: f64) -> Result<TreeNll> {
    crf.check_assignment(labels)
        .map_err(|e| Error::Data(format!("tree labels do not fit the model: {e}")))?;
    Ok(TreeNll::new(log_z - crf.score(labels), crf.len()))
}

pub fn tree_nll(params: &ModelParams, tree: &LabeledTree, cfg: &ModelConfig) -> Result<TreeNll> {
    let labels = tree.require_labels()?;
    let crf = predict_crf(params, tree, cfg)?;
    observed_nll(&crf, labels, log_partition(&crf))
}

/// `tree_nll` and its gradient with respect to every parameter.
pub fn nll_gradient(
    params: &ModelParams,
    tree: &LabeledTree,
    cfg: &ModelConfig,
) -> Result<(TreeNll, ModelParams)> {
    let labels = tree.require_labels()?;
    let mut tape = Tape::new();
    let weights = params.bind(&mut tape);
    let (crf, vars) = forward(&mut tape, &weights, tree, cfg)?;
    let inf = marginals(&crf);
    let nll = observed_nll(&crf, labels, inf.log_z)?;

    let d = cfg.num_labels;
    let mut node_seed: Vec<f64> = inf.node_marginals.concat();
    for (v, &y) in labels.iter().enumerate() {
        node_seed[v * d + y] -= 1.0;
    }
    tape.inject_gradient(vars.node, &node_seed)?;
    if let Some(edge) = vars.edge {
        let mut edge_seed: Vec<f64> = inf.edge_marginals.concat();
        for (e, &(p, c)) in crf.topology().edges().iter().enumerate() {
            edge_seed[e * d * d + labels[p] * d + labels[c]] -= 1.0;
        }
        tape.inject_gradient(edge, &edge_seed)?;
    }
    tape.backward_injected()?;
    let grads = weights.map(|v| tape.grad(*v).expect("parameters require grad").clone());
    Ok((nll, grads))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    /// Mean over trees of `log P(labels) / |V|`.
    pub per_node_ll: f64,
    /// Fraction of all nodes whose MAP label matches the ground truth.
    pub accuracy: f64,
    pub n_trees: usize,
    pub n_nodes: usize,
}

/// Per-node log-likelihood and MAP accuracy over a labeled dataset.
pub fn evaluate(params: &ModelParams, dataset: &Dataset, cfg: &ModelConfig) -> Result<Metrics> {
    check_dataset(dataset, cfg)?;
    let per_tree: Vec<(f64, usize, usize)> = dataset
        .trees
        .par_iter()
        .map(|tree| {
            let labels = tree.require_labels()?;
            let crf = predict_crf(params, tree, cfg)?;
            let nll = observed_nll(&crf, labels, log_partition(&crf))?;
            let (map, _) = map_decode(&crf);
            let correct = map.iter().zip(labels).filter(|(a, b)| a == b).count();
            Ok((-nll.per_node, correct, tree.len()))
        })
        .collect::<Result<_>>()?;
    let mut ll = 0.0;
    let (mut correct, mut nodes) = (0, 0);
    for (l, c, n) in &per_tree {
        ll += l;
        correct += c;
        nodes += n;
    }
    let n_trees = per_tree.len();
    Ok(Metrics {
        per_node_ll: if n_trees == 0 { 0.0 } else { ll / n_trees as f64 },
        accuracy: if nodes == 0 { 0.0 } else { correct as f64 / nodes as f64 },
        n_trees,
        n_nodes: nodes,
    })
}

pub(crate) fn check_dataset(dataset: &Dataset, cfg: &ModelConfig) -> Result<()> {
    if dataset.num_labels != cfg.num_labels {
        return Err(Error::Data(format!(
            "dataset has {} labels, model has {}",
            dataset.num_labels, cfg.num_labels
        )));
    }
    if let Some(a) = dataset.attr_size() {
        if a != cfg.gnn.attr_size {
            return Err(Error::Data(format!(
                "dataset attribute size {a}, model expects {}",
                cfg.gnn.attr_size
            )));
        }
    }
    Ok(())
}
