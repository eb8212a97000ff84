use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};

use super::{check_dataset, evaluate, nll_gradient, Adam, Metrics, ModelConfig, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds both initialization and the per-epoch shuffle.
    pub seed: u64,
    /// Stop after this many epochs without a better validation nll;
    /// `0` never stops early.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 20,
            batch_size: 32,
            seed: 0,
            early_stop_patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(format!(
                "epochs ({}) and batch size ({}) must be positive",
                self.epochs, self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-node nll over the epoch's mini-batches, measured before
    /// each batch's update.
    pub train_nll: f64,
    pub valid_nll: f64,
    pub valid_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl TrainingLog {
    /// One `key=value` line per epoch.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.epochs {
            out.push_str(&format!(
                "epoch={} train_nll={} valid_nll={} valid_accuracy={}\n",
                r.epoch, r.train_nll, r.valid_nll, r.valid_accuracy
            ));
        }
        out.push_str(&format!("best_epoch={}\n", self.best_epoch));
        out
    }
}

/// Mini-batch Adam on the mean per-node nll, keeping the parameters with
/// the best validation nll.
///
/// An empty `valid` set selects on the training set instead.
pub fn train(
    train: &Dataset,
    valid: &Dataset,
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainingLog)> {
    model.validate()?;
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    check_dataset(train, model)?;
    check_dataset(valid, model)?;
    for (i, t) in train.trees.iter().chain(&valid.trees).enumerate() {
        t.require_labels()
            .map_err(|_| Error::Data(format!("tree {i} is unlabeled")))?;
    }
    let select = if valid.is_empty() { train } else { valid };

    let mut params = ModelParams::init(model, cfg.seed);
    let mut adam = Adam::new(&params, cfg.learning_rate);
    let mut shuffle = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainingLog::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut nll_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| nll_gradient(&params, &train.trees[i], model))
                .collect::<Result<Vec<_>>>()?;
            let mut grads = params.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            for (&i, (nll, g)) in batch.iter().zip(&results) {
                nll_sum += nll.per_node;
                grads.add_scaled(g, scale / train.trees[i].len() as f64);
            }
            adam.step(&mut params, &grads)?;
        }
        let Metrics {
            per_node_ll,
            accuracy,
            ..
        } = evaluate(&params, select, model)?;
        let valid_nll = -per_node_ll;
        log.epochs.push(EpochRecord {
            epoch,
            train_nll: nll_sum / train.len() as f64,
            valid_nll,
            valid_accuracy: accuracy,
        });
        if best.as_ref().is_none_or(|(b, _)| valid_nll < *b) {
            best = Some((valid_nll, params.clone()));
            log.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if cfg.early_stop_patience > 0 && stale >= cfg.early_stop_patience {
                break;
            }
        }
    }
    let (_, best) = best.expect("at least one epoch ran");
    Ok((best, log))
}
