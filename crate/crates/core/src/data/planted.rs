//! Synthetic trees whose labels come from a known tree CRF.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::factors::{random_parents, TreeCrf};
use crate::inference::ancestral_sample;
use crate::topology::Topology;

use super::{Dataset, LabeledTree};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantedConfig {
    pub n_trees: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub num_labels: usize,
    /// Scale of the shared edge log-potential matrix; `0` makes labels
    /// independent given the node potentials.
    pub coupling: f64,
    /// Standard deviation of the Gaussian noise added to attributes.
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            n_trees: 200,
            min_nodes: 2,
            max_nodes: 10,
            num_labels: 3,
            coupling: 2.0,
            noise: 0.1,
            seed: 0,
        }
    }
}

/// A generated dataset together with the CRF each tree was drawn from.
#[derive(Clone, Debug)]
pub struct Planted {
    pub dataset: Dataset,
    pub crfs: Vec<TreeCrf>,
    /// The shared `d×d` matrix scaled by `coupling` on every edge.
    pub edge_matrix: Vec<f64>,
}

/// Generates labeled trees from planted CRFs.
///
/// Topologies use uniform attachment. Node log-potentials are uniform in
/// `[-1, 1]`; every edge uses `coupling · A` for one random matrix `A`
/// with entries in `[-1, 1]`. Labels are exact ancestral samples and each
/// node's attributes are its own log-potential vector plus Gaussian noise.
pub fn generate_planted(cfg: &PlantedConfig) -> Result<Planted> {
    if cfg.n_trees == 0 || cfg.min_nodes == 0 || cfg.min_nodes > cfg.max_nodes {
        return Err(Error::Config(format!(
            "need n_trees >= 1 and 1 <= min_nodes <= max_nodes, got {} trees, nodes {}..={}",
            cfg.n_trees, cfg.min_nodes, cfg.max_nodes
        )));
    }
    if cfg.num_labels < 2 {
        return Err(Error::Config(format!("need at least 2 labels, got {}", cfg.num_labels)));
    }
    if !(cfg.coupling >= 0.0 && cfg.coupling.is_finite()) {
        return Err(Error::Config(format!("coupling must be >= 0, got {}", cfg.coupling)));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(Error::Config(format!("noise level must be >= 0, got {}", cfg.noise)));
    }
    let noise = Normal::new(0.0, cfg.noise)
        .map_err(|e| Error::Config(format!("noise level {}: {e}", cfg.noise)))?;

    let d = cfg.num_labels;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let edge_matrix: Vec<f64> = base.iter().map(|a| cfg.coupling * a).collect();

    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut crfs = Vec::with_capacity(cfg.n_trees);
    for _ in 0..cfg.n_trees {
        let n = rng.random_range(cfg.min_nodes..=cfg.max_nodes);
        let topology = Topology::from_parents(random_parents(n, &mut rng))?;
        let node: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let edge = edge_matrix.repeat(n - 1);
        let crf = TreeCrf::new(topology.clone(), d, node, edge)?;
        let labels = ancestral_sample(&crf, &mut rng);
        let attributes = (0..n)
            .map(|v| crf.node(v).iter().map(|x| x + noise.sample(&mut rng)).collect())
            .collect();
        trees.push(LabeledTree::from_topology(
            topology,
            attributes,
            Some(labels),
            vec![None; n],
        )?);
        crfs.push(crf);
    }
    Ok(Planted {
        dataset: Dataset::new(d, trees)?,
        crfs,
        edge_matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_seed_is_reproducible() {
        let cfg = PlantedConfig {
            n_trees: 20,
            ..PlantedConfig::default()
        };
        let a = generate_planted(&cfg).unwrap();
        let b = generate_planted(&cfg).unwrap();
        assert_eq!(a.dataset, b.dataset);
        let c = generate_planted(&PlantedConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.dataset, c.dataset);
        for t in &a.dataset.trees {
            assert!((2..=10).contains(&t.len()));
            assert_eq!(t.attr_size(), 3);
        }
    }

    #[test]
    fn rejects_degenerate_ranges() {
        let base = PlantedConfig::default();
        for bad in [
            PlantedConfig { n_trees: 0, ..base },
            PlantedConfig { min_nodes: 0, ..base },
            PlantedConfig { min_nodes: 5, max_nodes: 4, ..base },
            PlantedConfig { num_labels: 1, ..base },
            PlantedConfig { coupling: -0.5, ..base },
            PlantedConfig { noise: -1.0, ..base },
        ] {
            assert!(generate_planted(&bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn zero_coupling_zeroes_edges() {
        let cfg = PlantedConfig {
            n_trees: 5,
            coupling: 0.0,
            ..PlantedConfig::default()
        };
        let p = generate_planted(&cfg).unwrap();
        assert!(p.crfs.iter().all(|c| c.edge_logpot().iter().all(|x| *x == 0.0)));
    }
}
