use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::factors::TreeCrf;

use super::{map_decode, Assignment};

/// Sweep schedule for [`gibbs_sample`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplerConfig {
    pub num_samples: usize,
    /// Sweeps discarded before the first kept sample.
    pub burn_in: usize,
    /// Keep every `thinning`-th sweep after burn-in.
    pub thinning: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            num_samples: 1000,
            burn_in: 500,
            thinning: 2,
            seed: 0,
        }
    }
}

/// Draws an index from unnormalized log-weights.
pub(crate) fn sample_logits(logits: &[f64], rng: &mut impl Rng) -> usize {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    // u landed on the rounding slack past the last bucket
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Systematic-scan Gibbs sampler started from the MAP assignment.
///
/// Each sweep resamples nodes in ascending index order from their exact
/// full conditionals. Output is a pure function of `crf` and `cfg`.
pub fn gibbs_sample(crf: &TreeCrf, cfg: &SamplerConfig) -> Result<Vec<Assignment>> {
    if cfg.thinning == 0 {
        return Err(Error::Config("sampler thinning must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(cfg.num_samples);
    if cfg.num_samples == 0 {
        return Ok(out);
    }
    let topo = crf.topology();
    let d = crf.num_labels();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut y, _) = map_decode(crf);
    let mut logits = vec![0.0; d];

    let mut sweep = 0usize;
    while out.len() < cfg.num_samples {
        for v in 0..crf.len() {
            logits.copy_from_slice(crf.node(v));
            if let (Some(p), Some(e)) = (topo.parent(v), topo.edge_to_parent(v)) {
                let table = crf.edge(e);
                let yp = y[p];
                for (yv, l) in logits.iter_mut().enumerate() {
                    *l += table[yp * d + yv];
                }
            }
            for &c in topo.children(v) {
                let table = crf.edge(topo.edge_to_parent(c).expect("child edge"));
                let yc = y[c];
                for (yv, l) in logits.iter_mut().enumerate() {
                    *l += table[yv * d + yc];
                }
            }
            y[v] = sample_logits(&logits, &mut rng);
        }
        sweep += 1;
        if sweep > cfg.burn_in && (sweep - cfg.burn_in).is_multiple_of(cfg.thinning) {
            out.push(y.clone());
        }
    }
    Ok(out)
}

/// Counts of distinct assignments, most frequent first; equal counts are
/// ordered lexicographically. The first entry is the empirical mode.
pub fn sample_histogram(samples: &[Assignment]) -> Vec<(Assignment, usize)> {
    let mut counts: HashMap<&Assignment, usize> = HashMap::new();
    for s in samples {
        *counts.entry(s).or_default() += 1;
    }
    let mut hist: Vec<(Assignment, usize)> =
        counts.into_iter().map(|(a, c)| (a.clone(), c)).collect();
    hist.sort_by(|(a, ca), (b, cb)| cb.cmp(ca).then_with(|| a.cmp(b)));
    hist
}
