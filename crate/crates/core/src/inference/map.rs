use crate::factors::TreeCrf;

use super::Assignment;

/// Index of the first maximum.
fn argmax(xs: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in xs.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

/// Most probable assignment by max-sum with back-pointers, and its
/// unnormalized log score. Every tie resolves to the lowest label.
pub fn map_decode(crf: &TreeCrf) -> (Assignment, f64) {
    let topo = crf.topology();
    let (n, d) = (crf.len(), crf.num_labels());
    let mut best: Vec<Vec<f64>> = (0..n).map(|v| crf.node(v).to_vec()).collect();
    let mut message = vec![Vec::new(); n];
    // back[c][y_p]: best label of c given its parent's label
    let mut back = vec![Vec::new(); n];

    for &v in topo.preorder().iter().rev() {
        for &c in topo.children(v) {
            for (yp, b) in best[v].iter_mut().enumerate() {
                *b += message[c][yp];
            }
        }
        if let Some(e) = topo.edge_to_parent(v) {
            let table = crf.edge(e);
            let (msg, ptr): (Vec<f64>, Vec<usize>) = (0..d)
                .map(|yp| {
                    let (arg, val) = argmax((0..d).map(|yc| table[yp * d + yc] + best[v][yc]));
                    (val, arg)
                })
                .unzip();
            message[v] = msg;
            back[v] = ptr;
        }
    }

    let mut labels = vec![0; n];
    let root = topo.root();
    labels[root] = argmax(best[root].iter().copied()).0;
    for &v in topo.preorder() {
        for &c in topo.children(v) {
            labels[c] = back[c][labels[v]];
        }
    }
    let score = crf.score(&labels);
    (labels, score)
}
