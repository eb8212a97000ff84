// Exact sum-product on a small tree CRF, checked against brute force.
//
// ```bash
// cargo run --example exact_inference
// ```

use nft::factors::TreeCrf;
use nft::inference::{enumerate_oracle, log_prob, marginals};
use nft::topology::Topology;

pub fn run_example() -> nft::Result<()> {
    // 0 is the root with children 1 and 2; 3 hangs off 1
    let topo = Topology::from_parents(vec![None, Some(0), Some(0), Some(1)])?;
    let d = 3;
    let node = vec![
        0.5, 0.0, -0.5, //
        0.0, 1.0, 0.0, //
        -1.0, 0.0, 1.0, //
        0.2, 0.2, 0.2,
    ];
    // every edge prefers equal labels on both ends
    let agree: Vec<f64> = (0..d * d)
        .map(|k| if k / d == k % d { 1.5 } else { 0.0 })
        .collect();
    let edge = agree.repeat(3);
    let crf = TreeCrf::new(topo, d, node, edge)?;

    let exact = marginals(&crf);
    let brute = enumerate_oracle(&crf)?;
    println!("log Z  = {:.12} (enumeration {:.12})", exact.log_z, brute.log_z);
    for (v, row) in exact.node_marginals.iter().enumerate() {
        let fmt: Vec<String> = row.iter().map(|p| format!("{p:.4}")).collect();
        println!("P(y_{v}) = [{}]", fmt.join(", "));
    }
    let y = [1, 1, 2, 1];
    println!("log P({y:?}) = {:.6}", log_prob(&crf, &y)?);

    let worst = exact
        .node_marginals
        .iter()
        .flatten()
        .zip(brute.node_marginals.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-12 && (exact.log_z - brute.log_z).abs() < 1e-12);
    println!("max marginal deviation from enumeration: {worst:.2e}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> nft::Result<()> {
    run_example()
}
