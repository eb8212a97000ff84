//! The invariant suite behind `nft oracle-check`.
//!
//! Each check takes the implementation under test as a parameter so a
//! deliberately broken variant can be run through the same code.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledTree;
use crate::error::Result;
use crate::factors::{random_parents, TreeCrf};
use crate::gnn::GnnConfig;
use crate::inference::{
    enumerate_oracle, gibbs_sample, map_decode, marginals, Assignment, InferenceResult,
    OracleResult, SamplerConfig,
};
use crate::topology::Topology;
use crate::training::{nll_gradient, tree_nll, ModelConfig, ModelParams};

/// Exact inference routines a check is run against.
#[derive(Clone, Copy)]
pub struct Inference {
    pub marginals: fn(&TreeCrf) -> InferenceResult,
    pub map: fn(&TreeCrf) -> (Assignment, f64),
}

impl Default for Inference {
    fn default() -> Self {
        Inference {
            marginals,
            map: map_decode,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("{tag} {}: {}", self.name, self.detail)
    }
}

/// Worst deviations of one CRF's exact inference from enumeration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleDeviation {
    pub log_z: f64,
    pub marginal: f64,
    /// `true` when the decoder's score equals the enumerated maximum
    /// bit-for-bit and the returned labels achieve it.
    pub map_exact: bool,
}

fn max_abs(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

pub fn compare_with_oracle(crf: &TreeCrf, imp: &Inference) -> Result<OracleDeviation> {
    let oracle: OracleResult = enumerate_oracle(crf)?;
    let got = (imp.marginals)(crf);
    let (labels, score) = (imp.map)(crf);
    let marginal = max_abs(&got.node_marginals, &oracle.node_marginals)
        .max(max_abs(&got.edge_marginals, &oracle.edge_marginals));
    Ok(OracleDeviation {
        log_z: (got.log_z - oracle.log_z).abs(),
        marginal: if marginal.is_nan() { f64::INFINITY } else { marginal },
        map_exact: score == oracle.map_score
            && crf.check_assignment(&labels).is_ok()
            && crf.score(&labels) == oracle.map_score,
    })
}

/// A random CRF with `|V| ∈ [1, 8]`, `d ∈ [2, 5]` and log-potentials in
/// `[-3, 3]`.
pub fn random_oracle_instance(rng: &mut impl Rng) -> TreeCrf {
    let n = rng.random_range(1..=8);
    let d = rng.random_range(2..=5);
    TreeCrf::random(n, d, 3.0, rng)
}

pub fn check_random_crfs(count: usize, seed: u64, tol: f64, imp: &Inference) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_z, mut worst_m, mut map_failures) = (0.0f64, 0.0f64, 0);
    for _ in 0..count {
        let crf = random_oracle_instance(&mut rng);
        match compare_with_oracle(&crf, imp) {
            Ok(dev) => {
                worst_z = worst_z.max(dev.log_z);
                worst_m = worst_m.max(dev.marginal);
                map_failures += usize::from(!dev.map_exact);
            }
            Err(e) => {
                return CheckOutcome {
                    name: "inference vs enumeration".into(),
                    passed: false,
                    detail: e.to_string(),
                }
            }
        }
    }
    CheckOutcome {
        name: "inference vs enumeration".into(),
        passed: worst_z <= tol && worst_m <= tol && map_failures == 0,
        detail: format!(
            "{count} CRFs, max |dlogZ|={worst_z:.3e}, max |dmarginal|={worst_m:.3e}, MAP mismatches={map_failures}"
        ),
    }
}

pub fn check_crf(crf: &TreeCrf, tol: f64, imp: &Inference) -> CheckOutcome {
    let name = "inference vs enumeration".to_string();
    match compare_with_oracle(crf, imp) {
        Ok(dev) => CheckOutcome {
            name,
            passed: dev.log_z <= tol && dev.marginal <= tol && dev.map_exact,
            detail: format!(
                "|dlogZ|={:.3e}, |dmarginal|={:.3e}, MAP exact={}",
                dev.log_z, dev.marginal, dev.map_exact
            ),
        },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Largest entrywise disagreement between analytic and central-difference
/// gradients, as `|a - f| / max(|a|, |f|, floor)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientDeviation {
    pub max_rel: f64,
    pub entries: usize,
}

/// Denominator floor for the relative gradient error; below it the
/// comparison is effectively absolute.
pub const GRADIENT_REL_FLOOR: f64 = 1e-4;

/// A random labeled tree, configuration and parameter set with
/// `|V| ≤ 6`, `h ≤ 4`, `d ≤ 3`.
pub fn random_gradient_instance(rng: &mut impl Rng) -> (LabeledTree, ModelConfig, ModelParams) {
    let n = rng.random_range(1..=6);
    let d = rng.random_range(2..=3);
    let h = rng.random_range(1..=4);
    let a = rng.random_range(1..=h);
    let steps = rng.random_range(0..=3);
    let cfg = ModelConfig {
        gnn: GnnConfig::new(h, steps, a).expect("valid sizes"),
        num_labels: d,
        baseline: rng.random_bool(0.2),
    };
    let parents = random_parents(n, rng);
    let attrs = (0..n)
        .map(|_| (0..a).map(|_| rng.random_range(-1.5..=1.5)).collect())
        .collect();
    let labels = (0..n).map(|_| rng.random_range(0..d)).collect();
    let tree = LabeledTree::new(parents, attrs, Some(labels), vec![None; n]).expect("valid tree");
    let mut params = ModelParams::init(&cfg, rng.random());
    for (_, t) in params.fields_mut() {
        for x in t.data_mut() {
            *x *= 2.0;
        }
    }
    (tree, cfg, params)
}

pub fn gradient_deviation(
    tree: &LabeledTree,
    cfg: &ModelConfig,
    params: &ModelParams,
    step: f64,
) -> Result<GradientDeviation> {
    let (_, grads) = nll_gradient(params, tree, cfg)?;
    let mut probe = params.clone();
    let mut max_rel = 0.0f64;
    let mut entries = 0;
    for (k, (_, g)) in grads.fields().into_iter().enumerate() {
        for i in 0..g.len() {
            let orig = params.fields()[k].1.data()[i];
            let mut at = |x: f64| -> Result<f64> {
                probe.fields_mut()[k].1.data_mut()[i] = x;
                Ok(tree_nll(&probe, tree, cfg)?.nll)
            };
            let fd = (at(orig + step)? - at(orig - step)?) / (2.0 * step);
            at(orig)?;
            let a = g.data()[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(GRADIENT_REL_FLOOR);
            max_rel = max_rel.max(if rel.is_nan() { f64::INFINITY } else { rel });
            entries += 1;
        }
    }
    Ok(GradientDeviation { max_rel, entries })
}

pub fn check_gradients(count: usize, seed: u64, tol: f64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut entries = 0;
    for _ in 0..count {
        let (tree, cfg, params) = random_gradient_instance(&mut rng);
        match gradient_deviation(&tree, &cfg, &params, 1e-5) {
            Ok(dev) => {
                worst = worst.max(dev.max_rel);
                entries += dev.entries;
            }
            Err(e) => {
                return CheckOutcome {
                    name: "gradient vs finite differences".into(),
                    passed: false,
                    detail: e.to_string(),
                }
            }
        }
    }
    CheckOutcome {
        name: "gradient vs finite differences".into(),
        passed: worst <= tol,
        detail: format!("{count} instances, {entries} entries, max rel err={worst:.3e}"),
    }
}

fn crf_on(parents: Vec<Option<usize>>, d: usize, scale: f64, seed: u64) -> TreeCrf {
    let topo = Topology::from_parents(parents).expect("valid parents");
    let n = topo.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let node = (0..n * d).map(|_| rng.random_range(-scale..=scale)).collect();
    let edge = (0..(n - 1) * d * d)
        .map(|_| rng.random_range(-scale..=scale))
        .collect();
    TreeCrf::new(topo, d, node, edge).expect("sizes match")
}

/// Five fixed small CRFs, each with at most 729 joint states.
pub fn sampler_fixture() -> Vec<TreeCrf> {
    vec![
        crf_on(vec![None, Some(0), Some(1)], 3, 1.0, 11),
        crf_on(vec![None, Some(0), Some(0), Some(0)], 2, 1.0, 12),
        crf_on(vec![None, Some(0), Some(1), Some(1), Some(0), Some(4)], 2, 0.8, 13),
        crf_on(vec![None, Some(0), Some(0), Some(2)], 3, 1.2, 14),
        crf_on(vec![None, Some(0), Some(1), Some(2), Some(3), Some(4)], 3, 2.5, 15),
    ]
}

/// Sweep schedule used for the fidelity check.
pub fn fidelity_schedule(num_samples: usize, seed: u64) -> SamplerConfig {
    SamplerConfig {
        num_samples,
        burn_in: 1000,
        thinning: 5,
        seed,
    }
}

/// Total variation between the empirical distribution of `samples` and
/// the enumerated joint.
pub fn total_variation(crf: &TreeCrf, samples: &[Assignment]) -> Result<f64> {
    let oracle = enumerate_oracle(crf)?;
    let mut counts = vec![0usize; oracle.joint.len()];
    for s in samples {
        counts[oracle.index_of(s)] += 1;
    }
    let n = samples.len() as f64;
    Ok(0.5
        * counts
            .iter()
            .zip(&oracle.joint)
            .map(|(&c, p)| (c as f64 / n - p).abs())
            .sum::<f64>())
}

pub fn check_sampler(num_samples: usize, seeds: &[u64], tol: f64) -> CheckOutcome {
    let mut worst = 0.0f64;
    for crf in sampler_fixture() {
        for &seed in seeds {
            let tv = gibbs_sample(&crf, &fidelity_schedule(num_samples, seed))
                .and_then(|s| total_variation(&crf, &s));
            match tv {
                Ok(tv) => worst = worst.max(tv),
                Err(e) => {
                    return CheckOutcome {
                        name: "sampler total variation".into(),
                        passed: false,
                        detail: e.to_string(),
                    }
                }
            }
        }
    }
    CheckOutcome {
        name: "sampler total variation".into(),
        passed: worst <= tol,
        detail: format!(
            "5 CRFs x {} seeds x {num_samples} samples, max TV={worst:.4}",
            seeds.len()
        ),
    }
}
