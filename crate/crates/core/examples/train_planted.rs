// Trains the full model and the independent baseline on planted data
// and compares them with the generating CRFs.
//
// ```bash
// cargo run --release --example train_planted
// ```

use nft::data::{generate_planted, split, PlantedConfig};
use nft::gnn::GnnConfig;
use nft::inference::log_prob;
use nft::training::{evaluate, train, ModelConfig, TrainConfig};

pub fn run_example() -> nft::Result<()> {
    run_with(300, 8)
}

pub fn run_with(n_trees: usize, epochs: usize) -> nft::Result<()> {
    let planted = generate_planted(&PlantedConfig {
        n_trees,
        min_nodes: 4,
        max_nodes: 10,
        coupling: 2.0,
        seed: 5,
        ..PlantedConfig::default()
    })?;
    let parts = split(&planted.dataset, [0.7, 0.15, 0.15], 0)?;

    let mut truth = 0.0;
    for (tree, crf) in planted.dataset.trees.iter().zip(&planted.crfs) {
        let y = tree.labels().expect("planted trees are labeled");
        truth += log_prob(crf, y)? / y.len() as f64;
    }
    println!("generating CRFs: per-node ll {:.4}", truth / planted.crfs.len() as f64);

    let cfg = TrainConfig {
        learning_rate: 0.01,
        epochs,
        ..TrainConfig::default()
    };
    for baseline in [false, true] {
        let model = ModelConfig {
            gnn: GnnConfig::new(16, 4, 3)?,
            num_labels: 3,
            baseline,
        };
        let (params, log) = train(&parts.train, &parts.valid, &model, &cfg)?;
        let m = evaluate(&params, &parts.test, &model)?;
        let name = if baseline { "independent baseline" } else { "full model" };
        println!(
            "{name:>20}: best epoch {:>2}, test per-node ll {:.4}, accuracy {:.3}",
            log.best_epoch, m.per_node_ll, m.accuracy
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> nft::Result<()> {
    if std::env::args().any(|a| a == "--large") {
        run_with(2000, 20)
    } else {
        run_example()
    }
}
