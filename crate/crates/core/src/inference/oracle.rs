//! Brute-force ground truth: every assignment scored directly.

use crate::error::{Error, Result};
use crate::factors::TreeCrf;

use super::{log_sum_exp, Assignment};

/// Largest `d^n` the oracle will enumerate.
pub const ORACLE_CAPACITY: u64 = 10_000_000;

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub log_z: f64,
    /// Probabilities in lexicographic assignment order (node 0 most
    /// significant); see [`OracleResult::index_of`].
    pub joint: Vec<f64>,
    pub node_marginals: Vec<Vec<f64>>,
    pub edge_marginals: Vec<Vec<f64>>,
    pub map: Assignment,
    pub map_score: f64,
    num_labels: usize,
}

impl OracleResult {
    pub fn index_of(&self, labels: &[usize]) -> usize {
        labels.iter().fold(0, |acc, &y| acc * self.num_labels + y)
    }
}

fn state_count(n: usize, d: usize) -> Option<u64> {
    let mut total: u64 = 1;
    for _ in 0..n {
        total = total.checked_mul(d as u64)?;
        if total > ORACLE_CAPACITY {
            return None;
        }
    }
    Some(total)
}

/// Calls `f` on every assignment of `n` nodes in lexicographic order.
pub fn for_each_assignment(n: usize, d: usize, mut f: impl FnMut(&[usize])) {
    let mut y = vec![0usize; n];
    loop {
        f(&y);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            y[i] += 1;
            if y[i] < d {
                break;
            }
            y[i] = 0;
        }
    }
}

fn raw_score(crf: &TreeCrf, y: &[usize]) -> f64 {
    let d = crf.num_labels();
    let mut s = 0.0;
    for (v, &label) in y.iter().enumerate() {
        s += crf.node_logpot()[v * d + label];
    }
    for (e, &(p, c)) in crf.topology().edges().iter().enumerate() {
        s += crf.edge_logpot()[e * d * d + y[p] * d + y[c]];
    }
    s
}

pub fn enumerate_oracle(crf: &TreeCrf) -> Result<OracleResult> {
    let (n, d) = (crf.len(), crf.num_labels());
    if state_count(n, d).is_none() {
        return Err(Error::Capacity(format!(
            "{d}^{n} assignments exceed the oracle limit of {ORACLE_CAPACITY}"
        )));
    }
    let mut scores = Vec::new();
    let mut map: Option<(Assignment, f64)> = None;
    for_each_assignment(n, d, |y| {
        let s = raw_score(crf, y);
        scores.push(s);
        if map.as_ref().is_none_or(|(_, best)| s > *best) {
            map = Some((y.to_vec(), s));
        }
    });
    let log_z = log_sum_exp(&scores);
    let joint: Vec<f64> = scores.iter().map(|s| (s - log_z).exp()).collect();

    let mut node_marginals = vec![vec![0.0; d]; n];
    let mut edge_marginals = vec![vec![0.0; d * d]; crf.topology().edges().len()];
    let mut k = 0;
    for_each_assignment(n, d, |y| {
        let p = joint[k];
        k += 1;
        for (v, &label) in y.iter().enumerate() {
            node_marginals[v][label] += p;
        }
        for (e, &(a, b)) in crf.topology().edges().iter().enumerate() {
            edge_marginals[e][y[a] * d + y[b]] += p;
        }
    });
    let (map, map_score) = map.expect("at least one assignment");
    Ok(OracleResult {
        log_z,
        joint,
        node_marginals,
        edge_marginals,
        map,
        map_score,
        num_labels: d,
    })
}
