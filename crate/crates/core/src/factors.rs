//! Node and edge factors computed from node embeddings, and the tree CRF
//! they define.
//!
//! Head outputs are log-potentials: any real output is a valid factor, and
//! the Gibbs measure of an assignment is the exponential of its summed
//! log-potentials. Edge tables are indexed `[parent label][child label]`,
//! and the edge head sees `[e_parent ‖ e_child]` in that order.

use std::fmt::Write as _;

use rand::Rng;

use crate::data::LabeledTree;
use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::gnn::uniform;
use crate::topology::Topology;
use crate::weights::named_weights;

named_weights! {
    /// `node_*`: affine map `R^h -> R^d`; `edge_*`: affine map `R^2h -> R^(d·d)`.
    pub struct HeadWeights { node_w, node_b, edge_w, edge_b }
}

pub type HeadParams = HeadWeights<Tensor>;

impl HeadWeights<Vec<usize>> {
    pub fn for_dims(hidden: usize, num_labels: usize) -> Self {
        HeadWeights {
            node_w: vec![hidden, num_labels],
            node_b: vec![num_labels],
            edge_w: vec![2 * hidden, num_labels * num_labels],
            edge_b: vec![num_labels * num_labels],
        }
    }
}

impl HeadParams {
    pub fn init(hidden: usize, num_labels: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        HeadWeights::for_dims(hidden, num_labels).map(|_, s| uniform(s, bound, rng))
    }

    pub fn zeros(hidden: usize, num_labels: usize) -> Self {
        HeadWeights::for_dims(hidden, num_labels).map(|_, s| Tensor::zeros(s.clone()))
    }

    pub fn num_labels(&self) -> usize {
        self.node_b.len()
    }

    pub fn check_shapes(&self, hidden: usize, num_labels: usize) -> Result<()> {
        if num_labels < 2 {
            return Err(Error::Config(format!("need at least 2 labels, got {num_labels}")));
        }
        let expected = HeadWeights::for_dims(hidden, num_labels);
        for ((name, t), (_, shape)) in self.fields().into_iter().zip(expected.fields()) {
            if t.shape() != shape.as_slice() {
                return Err(Error::Shape(format!(
                    "heads.{name}: expected {shape:?}, found {:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape) -> HeadWeights<Var> {
        self.map(|_, t| tape.param(t.clone()))
    }
}

fn single_row(tape: &mut Tape, v: Var, width: usize, what: &str) -> Result<Var> {
    let shape = tape.value(v).shape();
    if shape != [width] {
        return Err(Error::Shape(format!("{what}: expected [{width}], got {shape:?}")));
    }
    tape.reshape(v, vec![1, width])
}

/// Node log-potentials `[d]` for one embedding `[h]`.
pub fn node_factor(tape: &mut Tape, embedding: Var, heads: &HeadWeights<Var>) -> Result<Var> {
    let h = tape.value(heads.node_w).rows();
    let d = tape.value(heads.node_b).len();
    let row = single_row(tape, embedding, h, "node_factor")?;
    let out = tape.matmul(row, heads.node_w)?;
    let out = tape.add_bias(out, heads.node_b)?;
    tape.reshape(out, vec![d])
}

/// Edge log-potential table `[d, d]`, rows indexed by the parent label.
pub fn edge_factor(
    tape: &mut Tape,
    parent: Var,
    child: Var,
    heads: &HeadWeights<Var>,
) -> Result<Var> {
    let two_h = tape.value(heads.edge_w).rows();
    let dd = tape.value(heads.edge_b).len();
    let d = tape.value(heads.node_b).len();
    let joined = tape.concat(parent, child)?;
    let row = single_row(tape, joined, two_h, "edge_factor")?;
    let out = tape.matmul(row, heads.edge_w)?;
    let out = tape.add_bias(out, heads.edge_b)?;
    debug_assert_eq!(dd, d * d);
    tape.reshape(out, vec![d, d])
}

/// Tape handles of the factor tables behind a [`TreeCrf`].
#[derive(Clone, Copy, Debug)]
pub struct FactorVars {
    /// `[n, d]` node log-potentials.
    pub node: Var,
    /// `[n-1, d·d]` edge log-potentials in edge-id order; absent for a
    /// single node or when the edge head is disabled.
    pub edge: Option<Var>,
}

/// Applies both heads to every node and edge of `tree`.
///
/// With `edges_enabled = false` all edge tables are zero, which makes the
/// labels independent given the node factors.
pub fn build_crf(
    tape: &mut Tape,
    tree: &LabeledTree,
    embeddings: Var,
    heads: &HeadWeights<Var>,
    edges_enabled: bool,
) -> Result<(TreeCrf, FactorVars)> {
    let n = tree.len();
    let d = tape.value(heads.node_b).len();
    if tape.value(embeddings).rows() != n {
        return Err(Error::Shape(format!(
            "{} embedding rows for a {n}-node tree",
            tape.value(embeddings).rows()
        )));
    }
    let node = tape.matmul(embeddings, heads.node_w)?;
    let node = tape.add_bias(node, heads.node_b)?;

    let topo = tree.topology();
    let edge = if edges_enabled && n > 1 {
        let (parents, children): (Vec<usize>, Vec<usize>) = topo.edges().iter().copied().unzip();
        let ep = tape.gather_rows(embeddings, parents)?;
        let ec = tape.gather_rows(embeddings, children)?;
        let joined = tape.concat(ep, ec)?;
        let out = tape.matmul(joined, heads.edge_w)?;
        Some(tape.add_bias(out, heads.edge_b)?)
    } else {
        None
    };

    let edge_logpot = match edge {
        Some(e) => tape.value(e).data().to_vec(),
        None => vec![0.0; (n - 1) * d * d],
    };
    let crf = TreeCrf::new(
        topo.clone(),
        d,
        tape.value(node).data().to_vec(),
        edge_logpot,
    )?;
    Ok((crf, FactorVars { node, edge }))
}

/// Gibbs distribution over labels of a tree: one log-potential vector per
/// node and one `d×d` log-potential table per edge.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeCrf {
    topology: Topology,
    num_labels: usize,
    node_logpot: Vec<f64>,
    edge_logpot: Vec<f64>,
}

impl TreeCrf {
    pub fn new(
        topology: Topology,
        num_labels: usize,
        node_logpot: Vec<f64>,
        edge_logpot: Vec<f64>,
    ) -> Result<Self> {
        let n = topology.len();
        let d = num_labels;
        if d == 0 {
            return Err(Error::Contract("a CRF needs at least one label".into()));
        }
        if node_logpot.len() != n * d || edge_logpot.len() != (n - 1) * d * d {
            return Err(Error::Shape(format!(
                "{n} nodes with {d} labels need {} node and {} edge entries, got {} and {}",
                n * d,
                (n - 1) * d * d,
                node_logpot.len(),
                edge_logpot.len()
            )));
        }
        if let Some(bad) = node_logpot.iter().chain(&edge_logpot).find(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("non-finite log-potential {bad}")));
        }
        Ok(TreeCrf {
            topology,
            num_labels,
            node_logpot,
            edge_logpot,
        })
    }

    /// All log-potentials zero.
    pub fn uniform(topology: Topology, num_labels: usize) -> Self {
        let n = topology.len();
        let d = num_labels;
        TreeCrf::new(topology, d, vec![0.0; n * d], vec![0.0; (n - 1) * d * d])
            .expect("sizes are consistent")
    }

    /// Random topology by uniform attachment and log-potentials uniform in
    /// `[-scale, scale]`.
    pub fn random(n: usize, num_labels: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let parent = random_parents(n, rng);
        let topology = Topology::from_parents(parent).expect("attachment builds a tree");
        let d = num_labels;
        let node = (0..n * d).map(|_| rng.random_range(-scale..=scale)).collect();
        let edge = (0..(n - 1) * d * d).map(|_| rng.random_range(-scale..=scale)).collect();
        TreeCrf::new(topology, d, node, edge).expect("sizes are consistent")
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn len(&self) -> usize {
        self.topology.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topology.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn node(&self, v: usize) -> &[f64] {
        let d = self.num_labels;
        &self.node_logpot[v * d..(v + 1) * d]
    }

    pub fn node_mut(&mut self, v: usize) -> &mut [f64] {
        let d = self.num_labels;
        &mut self.node_logpot[v * d..(v + 1) * d]
    }

    /// Row-major `d×d` table of edge `e`, rows indexed by the parent label.
    pub fn edge(&self, e: usize) -> &[f64] {
        let dd = self.num_labels * self.num_labels;
        &self.edge_logpot[e * dd..(e + 1) * dd]
    }

    pub fn edge_mut(&mut self, e: usize) -> &mut [f64] {
        let dd = self.num_labels * self.num_labels;
        &mut self.edge_logpot[e * dd..(e + 1) * dd]
    }

    pub fn node_logpot(&self) -> &[f64] {
        &self.node_logpot
    }

    pub fn edge_logpot(&self) -> &[f64] {
        &self.edge_logpot
    }

    pub fn check_assignment(&self, labels: &[usize]) -> Result<()> {
        if labels.len() != self.len() {
            return Err(Error::Contract(format!(
                "assignment has {} labels for {} nodes",
                labels.len(),
                self.len()
            )));
        }
        if let Some(v) = labels.iter().position(|&y| y >= self.num_labels) {
            return Err(Error::Contract(format!(
                "label {} at node {v} is out of range 0..{}",
                labels[v], self.num_labels
            )));
        }
        Ok(())
    }

    /// Log of the unnormalized Gibbs measure: node terms in node order,
    /// then edge terms in edge order.
    pub fn score(&self, labels: &[usize]) -> f64 {
        let d = self.num_labels;
        let mut s = 0.0;
        for (v, &y) in labels.iter().enumerate() {
            s += self.node_logpot[v * d + y];
        }
        for (e, &(p, c)) in self.topology.edges().iter().enumerate() {
            s += self.edge_logpot[e * d * d + labels[p] * d + labels[c]];
        }
        s
    }

    /// The same distribution with edges re-oriented away from `root`.
    pub fn rerooted(&self, root: usize) -> Result<TreeCrf> {
        let topology = self.topology.rerooted(root)?;
        let d = self.num_labels;
        let mut edge_logpot = Vec::with_capacity(self.edge_logpot.len());
        for &(p, c) in topology.edges() {
            if self.topology.parent(c) == Some(p) {
                let e = self.topology.edge_to_parent(c).expect("non-root");
                edge_logpot.extend_from_slice(self.edge(e));
            } else {
                let e = self.topology.edge_to_parent(p).expect("non-root");
                let t = self.edge(e);
                for i in 0..d {
                    for j in 0..d {
                        edge_logpot.push(t[j * d + i]);
                    }
                }
            }
        }
        TreeCrf::new(topology, d, self.node_logpot.clone(), edge_logpot)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("nft-crf v1\n");
        writeln!(out, "nodes {} labels {}", self.len(), self.num_labels).unwrap();
        out.push_str("parents");
        for p in self.topology.parents() {
            match p {
                Some(p) => write!(out, " {p}").unwrap(),
                None => out.push_str(" -"),
            }
        }
        out.push('\n');
        for v in 0..self.len() {
            write!(out, "node {v}").unwrap();
            for x in self.node(v) {
                write!(out, " {x}").unwrap();
            }
            out.push('\n');
        }
        for (e, &(p, c)) in self.topology.edges().iter().enumerate() {
            write!(out, "edge {p} {c}").unwrap();
            for x in self.edge(e) {
                write!(out, " {x}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<TreeCrf> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::format(0, format!("missing {what} line")))
        };
        let (ln, header) = next("header")?;
        if header != "nft-crf v1" {
            return Err(Error::format(ln, format!("unknown header `{header}`")));
        }
        let (ln, dims) = next("dimensions")?;
        let dims: Vec<&str> = dims.split_whitespace().collect();
        let (n, d) = match dims.as_slice() {
            ["nodes", n, "labels", d] => (parse_num::<usize>(ln, n)?, parse_num::<usize>(ln, d)?),
            _ => return Err(Error::format(ln, "expected `nodes N labels D`")),
        };
        let (ln, parents) = next("parents")?;
        let mut fields = parents.split_whitespace();
        if fields.next() != Some("parents") {
            return Err(Error::format(ln, "expected `parents ...`"));
        }
        let parent: Vec<Option<usize>> = fields
            .map(|f| match f {
                "-" => Ok(None),
                p => parse_num(ln, p).map(Some),
            })
            .collect::<Result<_>>()?;
        if parent.len() != n {
            return Err(Error::format(ln, format!("{} parents for {n} nodes", parent.len())));
        }
        let topology = Topology::from_parents(parent)?;

        let mut node_logpot = vec![0.0; n * d];
        for v in 0..n {
            let (ln, line) = next("node")?;
            let vals = tagged_values(ln, line, "node", &[v], d)?;
            node_logpot[v * d..(v + 1) * d].copy_from_slice(&vals);
        }
        let mut edge_logpot = vec![0.0; n.saturating_sub(1) * d * d];
        for (e, &(p, c)) in topology.edges().iter().enumerate() {
            let (ln, line) = next("edge")?;
            let vals = tagged_values(ln, line, "edge", &[p, c], d * d)?;
            edge_logpot[e * d * d..(e + 1) * d * d].copy_from_slice(&vals);
        }
        TreeCrf::new(topology, d, node_logpot, edge_logpot)
    }
}

/// Uniform attachment: node `i` hangs under a uniformly chosen `j < i`.
pub fn random_parents(n: usize, rng: &mut impl Rng) -> Vec<Option<usize>> {
    (0..n)
        .map(|i| (i > 0).then(|| rng.random_range(0..i)))
        .collect()
}

fn parse_num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format(line, format!("`{s}` is not a valid number")))
}

fn tagged_values(line: usize, text: &str, tag: &str, ids: &[usize], count: usize) -> Result<Vec<f64>> {
    let mut fields = text.split_whitespace();
    if fields.next() != Some(tag) {
        return Err(Error::format(line, format!("expected `{tag}` line")));
    }
    for &id in ids {
        let got: usize = parse_num(line, fields.next().unwrap_or(""))?;
        if got != id {
            return Err(Error::format(line, format!("expected {tag} for {ids:?}")));
        }
    }
    let vals: Vec<f64> = fields.map(|f| parse_num(line, f)).collect::<Result<_>>()?;
    if vals.len() != count {
        return Err(Error::format(
            line,
            format!("expected {count} values, found {}", vals.len()),
        ));
    }
    Ok(vals)
}
