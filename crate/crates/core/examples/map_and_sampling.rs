// MAP decoding and a Gibbs-sample histogram for the same random CRF.
//
// ```bash
// cargo run --example map_and_sampling
// ```

use nft::factors::TreeCrf;
use nft::inference::{gibbs_sample, map_decode, sample_histogram, SamplerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> nft::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let crf = TreeCrf::random(6, 3, 2.0, &mut rng);

    let (map, score) = map_decode(&crf);
    println!("MAP labels {map:?}, score {score:.4}");

    let cfg = SamplerConfig {
        num_samples: 5000,
        burn_in: 500,
        thinning: 3,
        seed: 7,
    };
    let samples = gibbs_sample(&crf, &cfg)?;
    let hist = sample_histogram(&samples);
    println!("{} distinct assignments in {} samples", hist.len(), samples.len());
    for (labels, count) in hist.iter().take(5) {
        println!("{count:>6}  {labels:?}");
    }
    let (mode, _) = &hist[0];
    println!("empirical mode equals MAP: {}", *mode == map);
    Ok(())
}

#[allow(dead_code)]
fn main() -> nft::Result<()> {
    run_example()
}
