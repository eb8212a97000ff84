use crate::error::{Error, Result};

use super::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Var, Var),
    AddBias(Var, Var),
    GatherRows(Var, Vec<usize>),
    NeighborSum(Var, Vec<Vec<usize>>),
    Reshape(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
}

impl Node {
    fn requires_grad(&self) -> bool {
        self.grad.is_some()
    }
}

/// Operation record for reverse-mode differentiation.
///
/// Every operation appends one node, so the node list is already in
/// topological order. Backward passes walk it in reverse and accumulate
/// into each differentiable node's gradient until [`Tape::zero_grad`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    seeds: Vec<(Var, Vec<f64>)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        let grad = requires_grad.then(|| Tensor::zeros(value.shape().to_vec()));
        self.push_node(Node {
            value,
            grad,
            op: Op::Leaf,
        })
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            if let Some(g) = &mut node.grad {
                g.data_mut().fill(0.0);
            }
        }
        self.seeds.clear();
    }

    fn push_node(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        debug_assert!(value.is_finite() || inputs.iter().any(|v| !self.value(*v).is_finite()));
        let requires_grad = inputs.iter().any(|v| self.requires_grad(*v));
        let grad = requires_grad.then(|| Tensor::zeros(value.shape().to_vec()));
        self.push_node(Node { value, grad, op })
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn matrix_dims(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        let s = self.value(v).shape();
        match *s {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Shape(format!("{what} expects a matrix, got {s:?}"))),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul")?;
        let (k2, n) = self.matrix_dims(b, "matmul")?;
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul inner dimensions disagree: [{m}, {k}] x [{k2}, {n}]"
            )));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push_op(value, Op::MatMul(a, b), &[a, b]))
    }

    fn zip_map(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let shape = self.value(a).shape().to_vec();
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let value = Tensor::new(shape, data)?;
        Ok(self.push_op(value, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        self.zip_map(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        self.zip_map(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        self.zip_map(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let src = self.value(a);
        let data = src.data().iter().map(|x| f(*x)).collect();
        let value = Tensor::new(src.shape().to_vec(), data).expect("shape preserved");
        self.push_op(value, op, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    /// Joins along the last axis: `[m] ‖ [n] -> [m+n]`, or row-wise for
    /// matrices with equal row counts.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let value = match (ta.shape(), tb.shape()) {
            ([m], [n]) => {
                let mut data = ta.data().to_vec();
                data.extend_from_slice(tb.data());
                Tensor::new(vec![m + n], data)?
            }
            ([r, m], [r2, n]) if r == r2 => {
                let mut data = Vec::with_capacity(r * (m + n));
                for i in 0..*r {
                    data.extend_from_slice(ta.row(i));
                    data.extend_from_slice(tb.row(i));
                }
                Tensor::new(vec![*r, m + n], data)?
            }
            (sa, sb) => {
                return Err(Error::Shape(format!("concat: {sa:?} vs {sb:?}")));
            }
        };
        Ok(self.push_op(value, Op::Concat(a, b), &[a, b]))
    }

    /// Adds a length-`n` bias to every row of an `[m, n]` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "add_bias")?;
        let bs = self.value(bias).shape();
        if bs != [n] {
            return Err(Error::Shape(format!("add_bias: [{m}, {n}] vs bias {bs:?}")));
        }
        let b = self.value(bias).data();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(n) {
            for (v, bj) in row.iter_mut().zip(b) {
                *v += bj;
            }
        }
        let value = Tensor::new(vec![m, n], data)?;
        Ok(self.push_op(value, Op::AddBias(x, bias), &[x, bias]))
    }

    pub fn gather_rows(&mut self, x: Var, rows: Vec<usize>) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "gather_rows")?;
        if let Some(bad) = rows.iter().find(|&&r| r >= m) {
            return Err(Error::Shape(format!("gather_rows: row {bad} out of {m}")));
        }
        let src = self.value(x);
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in &rows {
            data.extend_from_slice(src.row(r));
        }
        let value = Tensor::new(vec![rows.len(), n], data)?;
        Ok(self.push_op(value, Op::GatherRows(x, rows), &[x]))
    }

    /// Row `i` of the output is the sum of the rows listed in `groups[i]`,
    /// added in list order. Empty groups produce zero rows.
    pub fn neighbor_sum(&mut self, x: Var, groups: Vec<Vec<usize>>) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "neighbor_sum")?;
        if let Some(bad) = groups.iter().flatten().find(|&&r| r >= m) {
            return Err(Error::Shape(format!("neighbor_sum: row {bad} out of {m}")));
        }
        let src = self.value(x);
        let mut data = vec![0.0; groups.len() * n];
        for (out, group) in data.chunks_mut(n).zip(&groups) {
            for &j in group {
                for (o, v) in out.iter_mut().zip(src.row(j)) {
                    *o += v;
                }
            }
        }
        let value = Tensor::new(vec![groups.len(), n], data)?;
        Ok(self.push_op(value, Op::NeighborSum(x, groups), &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.value(x).reshaped(shape)?;
        Ok(self.push_op(value, Op::Reshape(x), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        self.push_op(Tensor::scalar(total), Op::Sum(x), &[x])
    }

    /// Registers `seed` as an incoming gradient for `v`; it is propagated
    /// by the next [`backward`](Self::backward) or
    /// [`backward_injected`](Self::backward_injected).
    pub fn inject_gradient(&mut self, v: Var, seed: &[f64]) -> Result<()> {
        let shape = self.value(v).shape();
        if seed.len() != self.value(v).len() {
            return Err(Error::Shape(format!(
                "inject_gradient: tensor {shape:?} vs seed of length {}",
                seed.len()
            )));
        }
        self.seeds.push((v, seed.to_vec()));
        Ok(())
    }

    /// Backpropagates from a scalar root, together with any injected seeds.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let shape = self.value(root).shape();
        if self.value(root).len() != 1 {
            return Err(Error::Contract(format!(
                "backward root must be a scalar, got shape {shape:?}"
            )));
        }
        self.seeds.push((root, vec![1.0]));
        self.backward_injected()
    }

    /// Backpropagates only the injected seeds.
    pub fn backward_injected(&mut self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Contract("backward on an empty tape".into()));
        }
        let seeds = std::mem::take(&mut self.seeds);
        let mut adjoint: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        for (v, g) in seeds {
            self.accumulate(&mut adjoint, v, g);
        }

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = adjoint[i].take() else { continue };
            self.apply_rule(i, &g, &mut adjoint);
            if let Some(acc) = &mut self.nodes[i].grad {
                for (a, gi) in acc.data_mut().iter_mut().zip(&g) {
                    *a += gi;
                }
            }
        }
        Ok(())
    }

    fn accumulate(&self, adjoint: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
        if !self.requires_grad(v) {
            return;
        }
        match &mut adjoint[v.0] {
            Some(acc) => {
                for (a, gi) in acc.iter_mut().zip(&g) {
                    *a += gi;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn apply_rule(&self, i: usize, g: &[f64], adjoint: &mut [Option<Vec<f64>>]) {
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.requires_grad(*a) {
                    // g [m,n] . b^T [n,k]
                    let mut da = vec![0.0; m * k];
                    for r in 0..m {
                        for c in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += g[r * n + j] * tb.data()[c * n + j];
                            }
                            da[r * k + c] = s;
                        }
                    }
                    self.accumulate(adjoint, *a, da);
                }
                if self.requires_grad(*b) {
                    // a^T [k,m] . g [m,n]
                    let mut db = vec![0.0; k * n];
                    for r in 0..m {
                        for c in 0..k {
                            let av = ta.data()[r * k + c];
                            for j in 0..n {
                                db[c * n + j] += av * g[r * n + j];
                            }
                        }
                    }
                    self.accumulate(adjoint, *b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(adjoint, *a, g.to_vec());
                self.accumulate(adjoint, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(adjoint, *a, g.to_vec());
                self.accumulate(adjoint, *b, g.iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(adjoint, *a, g.iter().zip(vb).map(|(x, y)| x * y).collect());
                self.accumulate(adjoint, *b, g.iter().zip(va).map(|(x, y)| x * y).collect());
            }
            Op::Sigmoid(a) => {
                let d = g
                    .iter()
                    .zip(out.data())
                    .map(|(gi, y)| gi * y * (1.0 - y))
                    .collect();
                self.accumulate(adjoint, *a, d);
            }
            Op::Tanh(a) => {
                let d = g
                    .iter()
                    .zip(out.data())
                    .map(|(gi, y)| gi * (1.0 - y * y))
                    .collect();
                self.accumulate(adjoint, *a, d);
            }
            Op::Concat(a, b) => {
                let (m, n) = (self.value(*a).cols(), self.value(*b).cols());
                let mut da = Vec::with_capacity(self.value(*a).len());
                let mut db = Vec::with_capacity(self.value(*b).len());
                for row in g.chunks(m + n) {
                    da.extend_from_slice(&row[..m]);
                    db.extend_from_slice(&row[m..]);
                }
                self.accumulate(adjoint, *a, da);
                self.accumulate(adjoint, *b, db);
            }
            Op::AddBias(x, bias) => {
                let n = out.cols();
                let mut db = vec![0.0; n];
                for row in g.chunks(n) {
                    for (d, gi) in db.iter_mut().zip(row) {
                        *d += gi;
                    }
                }
                self.accumulate(adjoint, *x, g.to_vec());
                self.accumulate(adjoint, *bias, db);
            }
            Op::GatherRows(x, rows) => {
                let n = out.cols();
                let mut dx = vec![0.0; self.value(*x).len()];
                for (r, grow) in rows.iter().zip(g.chunks(n)) {
                    for (d, gi) in dx[r * n..(r + 1) * n].iter_mut().zip(grow) {
                        *d += gi;
                    }
                }
                self.accumulate(adjoint, *x, dx);
            }
            Op::NeighborSum(x, groups) => {
                let n = out.cols();
                let mut dx = vec![0.0; self.value(*x).len()];
                for (group, grow) in groups.iter().zip(g.chunks(n)) {
                    for &j in group {
                        for (d, gi) in dx[j * n..(j + 1) * n].iter_mut().zip(grow) {
                            *d += gi;
                        }
                    }
                }
                self.accumulate(adjoint, *x, dx);
            }
            Op::Reshape(x) => self.accumulate(adjoint, *x, g.to_vec()),
            Op::Sum(x) => {
                let len = self.value(*x).len();
                self.accumulate(adjoint, *x, vec![g[0]; len]);
            }
        }
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for r in 0..m {
        let orow = &mut out[r * n..(r + 1) * n];
        for c in 0..k {
            let av = a[r * k + c];
            let brow = &b[c * n..(c + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
