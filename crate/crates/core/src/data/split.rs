use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::Dataset;

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

/// Deterministic shuffled partition into train/valid/test by `fractions`.
///
/// Train and valid sizes are rounded to the nearest tree; test takes the
/// rest. Every part must end up non-empty.
pub fn split(dataset: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Splits> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f))
        || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must be in [0, 1] and sum to 1"
        )));
    }
    let n = dataset.len();
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_valid = ((fractions[1] * n as f64).round() as usize).min(n - n_train.min(n));
    let n_test = n.saturating_sub(n_train + n_valid);
    if n_train == 0 || n_valid == 0 || n_test == 0 {
        return Err(Error::Config(format!(
            "splitting {n} trees by {fractions:?} gives {n_train}/{n_valid}/{n_test}; every part must be non-empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |idx: &[usize]| Dataset {
        num_labels: dataset.num_labels,
        trees: idx.iter().map(|&i| dataset.trees[i].clone()).collect(),
    };
    Ok(Splits {
        train: take(&order[..n_train]),
        valid: take(&order[n_train..n_train + n_valid]),
        test: take(&order[n_train + n_valid..]),
    })
}
