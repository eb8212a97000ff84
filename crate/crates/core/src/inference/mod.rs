//! Exact and sampling-based inference on a [`TreeCrf`].
//!
//! Sum-product and max-product run as one leaves-to-root pass (plus a
//! root-to-leaves pass for marginals) entirely in log-space.

mod gibbs;
mod map;
mod oracle;

pub use gibbs::{gibbs_sample, sample_histogram, SamplerConfig};
pub use map::map_decode;
pub use oracle::{enumerate_oracle, for_each_assignment, OracleResult, ORACLE_CAPACITY};

use rand::Rng;

use crate::error::Result;
use crate::factors::TreeCrf;

/// Per-node integer labels.
pub type Assignment = Vec<usize>;

/// `log Σ exp(x)`, stabilised by the running maximum.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + s.ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceResult {
    pub log_z: f64,
    /// `[n][d]`, rows sum to one.
    pub node_marginals: Vec<Vec<f64>>,
    /// Per edge id, row-major `d×d` indexed `[parent label][child label]`.
    pub edge_marginals: Vec<Vec<f64>>,
}

/// Leaves-to-root sum-product state.
struct Upward {
    /// `belief[v][y]`: node term plus messages from all children of `v`.
    belief: Vec<Vec<f64>>,
    /// `message[c][y_p]`: child `c` summed out, as a function of its
    /// parent's label. Empty for the root.
    message: Vec<Vec<f64>>,
}

fn upward(crf: &TreeCrf) -> Upward {
    let topo = crf.topology();
    let (n, d) = (crf.len(), crf.num_labels());
    let mut belief: Vec<Vec<f64>> = (0..n).map(|v| crf.node(v).to_vec()).collect();
    let mut message = vec![Vec::new(); n];
    let mut scratch = vec![0.0; d];
    for &v in topo.preorder().iter().rev() {
        for &c in topo.children(v) {
            for (yp, b) in belief[v].iter_mut().enumerate() {
                *b += message[c][yp];
            }
        }
        if let Some(e) = topo.edge_to_parent(v) {
            let table = crf.edge(e);
            message[v] = (0..d)
                .map(|yp| {
                    for (yc, s) in scratch.iter_mut().enumerate() {
                        *s = table[yp * d + yc] + belief[v][yc];
                    }
                    log_sum_exp(&scratch)
                })
                .collect();
        }
    }
    Upward { belief, message }
}

/// `log Z`, exact up to floating point.
pub fn log_partition(crf: &TreeCrf) -> f64 {
    let up = upward(crf);
    log_sum_exp(&up.belief[crf.topology().root()])
}

/// Exact node and edge marginals together with `log Z`.
pub fn marginals(crf: &TreeCrf) -> InferenceResult {
    let topo = crf.topology();
    let (n, d) = (crf.len(), crf.num_labels());
    let up = upward(crf);
    let log_z = log_sum_exp(&up.belief[topo.root()]);

    // outside[v][y]: log-sum of everything not below v, with y_v = y
    let mut outside = vec![vec![0.0; d]; n];
    let mut edge_marginals = vec![Vec::new(); topo.edges().len()];
    let mut scratch = vec![0.0; d];
    for &p in topo.preorder() {
        for &c in topo.children(p) {
            // parent side of edge (p, c), excluding c's own message
            let pre: Vec<f64> = (0..d)
                .map(|yp| {
                    let mut s = outside[p][yp] + crf.node(p)[yp];
                    for &other in topo.children(p) {
                        if other != c {
                            s += up.message[other][yp];
                        }
                    }
                    s
                })
                .collect();
            let e = topo.edge_to_parent(c).expect("child has an edge");
            let table = crf.edge(e);
            for yc in 0..d {
                for (yp, s) in scratch.iter_mut().enumerate() {
                    *s = pre[yp] + table[yp * d + yc];
                }
                outside[c][yc] = log_sum_exp(&scratch);
            }
            let mut em = vec![0.0; d * d];
            for yp in 0..d {
                for yc in 0..d {
                    em[yp * d + yc] =
                        (pre[yp] + table[yp * d + yc] + up.belief[c][yc] - log_z).exp();
                }
            }
            normalize(&mut em);
            edge_marginals[e] = em;
        }
    }

    let node_marginals = (0..n)
        .map(|v| {
            let mut row: Vec<f64> = (0..d)
                .map(|y| (outside[v][y] + up.belief[v][y] - log_z).exp())
                .collect();
            normalize(&mut row);
            row
        })
        .collect();

    InferenceResult {
        log_z,
        node_marginals,
        edge_marginals,
    }
}

fn normalize(xs: &mut [f64]) {
    let s: f64 = xs.iter().sum();
    xs.iter_mut().for_each(|x| *x /= s);
}

/// `log P(labels)` under the normalized Gibbs distribution.
pub fn log_prob(crf: &TreeCrf, labels: &[usize]) -> Result<f64> {
    crf.check_assignment(labels)?;
    Ok(crf.score(labels) - log_partition(crf))
}

/// Conditional label distribution of child `c` given its parent's label,
/// as used for exact ancestral sampling.
fn child_conditionals(crf: &TreeCrf) -> (Vec<f64>, Vec<Vec<f64>>) {
    let topo = crf.topology();
    let d = crf.num_labels();
    let up = upward(crf);
    let root_logits = up.belief[topo.root()].clone();
    let mut cond = vec![Vec::new(); crf.len()];
    for (e, &(_, c)) in topo.edges().iter().enumerate() {
        let table = crf.edge(e);
        let mut rows = Vec::with_capacity(d * d);
        for yp in 0..d {
            rows.extend((0..d).map(|yc| table[yp * d + yc] + up.belief[c][yc]));
        }
        cond[c] = rows;
    }
    (root_logits, cond)
}

/// One exact draw from the joint: root from its marginal, then each child
/// from its conditional given the parent.
pub fn ancestral_sample(crf: &TreeCrf, rng: &mut impl Rng) -> Assignment {
    let topo = crf.topology();
    let d = crf.num_labels();
    let (root_logits, cond) = child_conditionals(crf);
    let mut y = vec![0; crf.len()];
    y[topo.root()] = gibbs::sample_logits(&root_logits, rng);
    for &v in topo.preorder() {
        for &c in topo.children(v) {
            let yp = y[v];
            y[c] = gibbs::sample_logits(&cond[c][yp * d..(yp + 1) * d], rng);
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Topology;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path(n: usize) -> Topology {
        Topology::from_parents((0..n).map(|i| i.checked_sub(1)).collect()).unwrap()
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert_eq!(log_sum_exp(&[0.0, 0.0]), 2f64.ln());
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn single_node_partition() {
        let crf = TreeCrf::uniform(path(1), 2);
        assert_eq!(log_partition(&crf), 2f64.ln());
        assert!((log_prob(&crf, &[0]).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert!(log_prob(&crf, &[2]).is_err());
        assert!(log_prob(&crf, &[0, 0]).is_err());
    }

    #[test]
    fn uniform_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (n, d) in [(1, 3), (4, 2), (7, 5)] {
            let topo = Topology::from_parents(crate::factors::random_parents(n, &mut rng)).unwrap();
            let crf = TreeCrf::uniform(topo, d);
            let want = n as f64 * (d as f64).ln();
            assert!((log_partition(&crf) - want).abs() < 1e-12);
            let m = marginals(&crf);
            for row in &m.node_marginals {
                for p in row {
                    assert!((p - 1.0 / d as f64).abs() < 1e-14);
                }
            }
            let y = vec![d - 1; n];
            assert!((log_prob(&crf, &y).unwrap() + want).abs() < 1e-12);
        }
    }

    #[test]
    fn two_node_chain_by_hand() {
        // joint ∝ exp(node0 + node1 + edge)
        let node = vec![0.2, -0.4, 1.0, 0.3];
        let edge = vec![0.5, -1.0, 0.0, 0.7];
        let crf = TreeCrf::new(path(2), 2, node.clone(), edge.clone()).unwrap();
        let mut joint = [[0.0; 2]; 2];
        let mut z = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let w = (node[a] + node[2 + b] + edge[a * 2 + b]).exp();
                joint[a][b] = w;
                z += w;
            }
        }
        let m = marginals(&crf);
        assert!((m.log_z - z.ln()).abs() < 1e-14);
        for a in 0..2 {
            for b in 0..2 {
                assert!((m.edge_marginals[0][a * 2 + b] - joint[a][b] / z).abs() < 1e-14);
            }
            let p0 = (joint[a][0] + joint[a][1]) / z;
            let p1 = (joint[0][a] + joint[1][a]) / z;
            assert!((m.node_marginals[0][a] - p0).abs() < 1e-14);
            assert!((m.node_marginals[1][a] - p1).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_shift_moves_only_log_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let crf = TreeCrf::random(6, 3, 2.0, &mut rng);
        let mut shifted = crf.clone();
        shifted.node_mut(4).iter_mut().for_each(|x| *x += 1.75);
        let (a, b) = (marginals(&crf), marginals(&shifted));
        assert!((b.log_z - a.log_z - 1.75).abs() < 1e-12);
        for (ra, rb) in a.node_marginals.iter().zip(&b.node_marginals) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ancestral_conditionals_are_normalizable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let crf = TreeCrf::random(5, 3, 1.0, &mut rng);
        let (root, cond) = child_conditionals(&crf);
        assert!((log_sum_exp(&root) - log_partition(&crf)).abs() < 1e-12);
        assert!(cond[crf.topology().root()].is_empty());
        assert_eq!(cond[1].len(), 9);
    }
}
