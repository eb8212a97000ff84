// Gated GNN embeddings of one tree and the factor tables the heads build
// from them.
//
// ```bash
// cargo run --example gnn_embeddings
// ```

use nft::data::LabeledTree;
use nft::diffcore::Tape;
use nft::factors::{build_crf, HeadParams};
use nft::gnn::{embed, GnnConfig, GnnParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> nft::Result<()> {
    let tree = LabeledTree::new(
        vec![None, Some(0), Some(0), Some(2)],
        vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5], vec![-1.0, 0.0]],
        None,
        vec![None; 4],
    )?;
    let cfg = GnnConfig::new(6, 3, 2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gnn = GnnParams::init(&cfg, &mut rng);
    let heads = HeadParams::init(cfg.hidden_size, 3, &mut rng);

    let mut tape = Tape::new();
    let gw = gnn.bind(&mut tape);
    let hw = heads.bind(&mut tape);
    let emb = embed(&mut tape, &tree, &gw, &cfg)?;
    println!("embeddings {:?}", tape.value(emb).shape());
    for v in 0..tree.len() {
        let row: Vec<String> = tape.value(emb).row(v).iter().map(|x| format!("{x:+.3}")).collect();
        println!("  e_{v} = [{}]", row.join(" "));
    }

    let (crf, vars) = build_crf(&mut tape, &tree, emb, &hw, true)?;
    println!("node log-potentials {:?}", tape.value(vars.node).shape());
    println!("edge log-potentials {:?}", vars.edge.map(|e| tape.value(e).shape().to_vec()));
    println!("log-potentials of node 0: {:?}", crf.node(0));
    Ok(())
}

#[allow(dead_code)]
fn main() -> nft::Result<()> {
    run_example()
}
