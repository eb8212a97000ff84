//! Neural factor trees: a gated graph neural network parameterizes the
//! node and edge factors of a conditional random field over the labels of
//! a tree's nodes.
//!
//! Inference on the resulting tree CRF is exact (sum-product for `log Z`
//! and marginals, max-product for the MAP labeling), so training can use
//! the exact log-likelihood gradient. A Gibbs sampler and a brute-force
//! enumerator are provided for checking and for sampling histograms.
//!
//! ```
//! use nft::factors::TreeCrf;
//! use nft::inference::{log_partition, map_decode};
//! use nft::topology::Topology;
//!
//! let topo = Topology::from_parents(vec![None, Some(0), Some(0)]).unwrap();
//! let crf = TreeCrf::uniform(topo, 2);
//! assert!((log_partition(&crf) - 3.0 * 2f64.ln()).abs() < 1e-12);
//! assert_eq!(map_decode(&crf).0, vec![0, 0, 0]);
//! ```

pub mod cli;
pub mod data;
pub mod diffcore;
pub mod error;
pub mod factors;
pub mod gnn;
pub mod inference;
pub mod topology;
pub mod training;
mod weights;

pub use error::{Error, Result};
