// Runs the invariant checks behind `nft oracle-check` at a small size.
//
// ```bash
// cargo run --release --example oracle_check
// ```

use nft::cli::checks::{check_gradients, check_random_crfs, check_sampler, Inference};

pub fn run_example() -> nft::Result<()> {
    let outcomes = [
        check_random_crfs(50, 0, 1e-9, &Inference::default()),
        check_gradients(3, 0, 1e-4),
        check_sampler(2000, &[0], 0.1),
    ];
    for o in &outcomes {
        println!("{}", o.line());
    }
    assert!(outcomes.iter().all(|o| o.passed));
    Ok(())
}

#[allow(dead_code)]
fn main() -> nft::Result<()> {
    run_example()
}
