//! Gated graph neural network over tree nodes.
//!
//! States start as the node attributes padded with zeros to the hidden
//! size. Each step sums a two-layer message MLP over every node's
//! undirected neighbors and merges the sum into the node state with a GRU.

use rand::Rng;

use crate::data::LabeledTree;
use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::weights::named_weights;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GnnConfig {
    pub hidden_size: usize,
    pub steps: usize,
    pub attr_size: usize,
}

impl GnnConfig {
    pub const DEFAULT_STEPS: usize = 4;

    pub fn new(hidden_size: usize, steps: usize, attr_size: usize) -> Result<Self> {
        let cfg = GnnConfig {
            hidden_size,
            steps,
            attr_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.attr_size == 0 || self.hidden_size == 0 {
            return Err(Error::Config(format!(
                "hidden size ({}) and attribute size ({}) must be positive",
                self.hidden_size, self.attr_size
            )));
        }
        if self.hidden_size < self.attr_size {
            return Err(Error::Config(format!(
                "hidden size {} is smaller than attribute size {}",
                self.hidden_size, self.attr_size
            )));
        }
        Ok(())
    }
}

named_weights! {
    /// Message MLP (`msg_*`, layers applied as `x·W + b`) and GRU gates
    /// (`gru_w*` act on the aggregated message, `gru_u*` on the state).
    pub struct GnnWeights {
        msg_w1, msg_b1, msg_w2, msg_b2,
        gru_wz, gru_uz, gru_bz,
        gru_wr, gru_ur, gru_br,
        gru_wc, gru_uc, gru_bc,
    }
}

pub type GnnParams = GnnWeights<Tensor>;

impl GnnWeights<Vec<usize>> {
    pub fn for_config(cfg: &GnnConfig) -> Self {
        let h = cfg.hidden_size;
        let (mat, vec) = (vec![h, h], vec![h]);
        GnnWeights {
            msg_w1: mat.clone(),
            msg_b1: vec.clone(),
            msg_w2: mat.clone(),
            msg_b2: vec.clone(),
            gru_wz: mat.clone(),
            gru_uz: mat.clone(),
            gru_bz: vec.clone(),
            gru_wr: mat.clone(),
            gru_ur: mat.clone(),
            gru_br: vec.clone(),
            gru_wc: mat.clone(),
            gru_uc: mat,
            gru_bc: vec,
        }
    }
}

impl GnnParams {
    /// Uniform in `[-1/sqrt(h), 1/sqrt(h)]`.
    pub fn init(cfg: &GnnConfig, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (cfg.hidden_size as f64).sqrt();
        GnnWeights::for_config(cfg).map(|_, shape| uniform(shape, bound, rng))
    }

    pub fn zeros(cfg: &GnnConfig) -> Self {
        GnnWeights::for_config(cfg).map(|_, shape| Tensor::zeros(shape.clone()))
    }

    pub fn check_shapes(&self, cfg: &GnnConfig) -> Result<()> {
        let expected = GnnWeights::for_config(cfg);
        for ((name, t), (_, shape)) in self.fields().into_iter().zip(expected.fields()) {
            if t.shape() != shape.as_slice() {
                return Err(Error::Shape(format!(
                    "gnn.{name}: expected {shape:?}, found {:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape) -> GnnWeights<Var> {
        self.map(|_, t| tape.param(t.clone()))
    }
}

pub(crate) fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches length")
}

/// Initial states: attributes padded with zeros to `hidden_size`.
pub fn init_hidden(tree: &LabeledTree, cfg: &GnnConfig) -> Result<Tensor> {
    let h = cfg.hidden_size;
    let mut data = Vec::with_capacity(tree.len() * h);
    for (v, x) in tree.attributes().iter().enumerate() {
        if x.len() != cfg.attr_size {
            return Err(Error::Data(format!(
                "node {v} has {} attributes, model expects {}",
                x.len(),
                cfg.attr_size
            )));
        }
        data.extend_from_slice(x);
        data.resize(data.len() + h - x.len(), 0.0);
    }
    Tensor::new(vec![tree.len(), h], data)
}

fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    tape.add_bias(xw, b)
}

/// One synchronous message-passing step; every node reads the same
/// pre-step states.
pub fn propagate(
    tape: &mut Tape,
    neighbors: &[Vec<usize>],
    state: Var,
    w: &GnnWeights<Var>,
) -> Result<Var> {
    let hidden = affine(tape, state, w.msg_w1, w.msg_b1)?;
    let hidden = tape.tanh(hidden);
    let messages = affine(tape, hidden, w.msg_w2, w.msg_b2)?;
    let agg = tape.neighbor_sum(messages, neighbors.to_vec())?;

    let gate = |tape: &mut Tape, wa: Var, uh: Var, b: Var, input: Var| -> Result<Var> {
        let from_msg = tape.matmul(agg, wa)?;
        let from_state = tape.matmul(input, uh)?;
        let s = tape.add(from_msg, from_state)?;
        tape.add_bias(s, b)
    };
    let z = gate(tape, w.gru_wz, w.gru_uz, w.gru_bz, state)?;
    let z = tape.sigmoid(z);
    let r = gate(tape, w.gru_wr, w.gru_ur, w.gru_br, state)?;
    let r = tape.sigmoid(r);
    let reset_state = tape.mul(r, state)?;
    let cand = gate(tape, w.gru_wc, w.gru_uc, w.gru_bc, reset_state)?;
    let cand = tape.tanh(cand);

    let ones = tape.constant(Tensor::filled(tape.value(z).shape().to_vec(), 1.0));
    let keep = tape.sub(ones, z)?;
    let kept = tape.mul(keep, state)?;
    let fresh = tape.mul(z, cand)?;
    tape.add(kept, fresh)
}

/// Node embeddings after `cfg.steps` propagation steps, shape `[n, h]`.
pub fn embed(
    tape: &mut Tape,
    tree: &LabeledTree,
    w: &GnnWeights<Var>,
    cfg: &GnnConfig,
) -> Result<Var> {
    let init = init_hidden(tree, cfg)?;
    let neighbors = tree.topology().neighbor_lists();
    let mut state = tape.constant(init);
    for _ in 0..cfg.steps {
        state = propagate(tape, &neighbors, state, w)?;
    }
    Ok(state)
}
