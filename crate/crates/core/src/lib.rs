//! Random forests that report how uncertain each prediction is, and why.
//!
//! Every prediction comes with two decompositions of its uncertainty into
//! an *aleatoric* part (noise inherent in the data near the query) and an
//! *epistemic* part (lack of knowledge that more data would remove):
//!
//! * [`entropy`]: total uncertainty is the entropy of the forest's mean
//!   class distribution, aleatoric uncertainty the mean entropy of the
//!   individual trees, epistemic uncertainty their difference.
//! * [`likelihood`]: for binary tasks, each tree's leaf counts define a
//!   relative likelihood over the leaf's class probability, from which
//!   degrees of support for both classes and the two uncertainties follow;
//!   the per-tree values are averaged.
//!
//! [`evaluate`] measures how useful these quantities are for abstaining on
//! difficult inputs via accuracy-rejection curves.
//!
//! ```
//! use forest_uq::{dataset::synthetic, evaluate, Forest, ForestConfig, RlCache};
//!
//! let data = synthetic::two_gaussians(300, 0.2, 1);
//! let forest = Forest::fit(&data, &ForestConfig { n_trees: 20, ..ForestConfig::default() })?;
//! let u = evaluate::instance_uncertainty(&forest, &[0.0, 0.0], &RlCache::default())?;
//! assert!(u.entropy.total >= u.entropy.aleatoric);
//! let rl = u.likelihood.expect("binary model");
//! assert!(rl.epistemic + rl.aleatoric <= 1.0);
//! # Ok::<(), forest_uq::Error>(())
//! ```

pub mod dataset;
pub mod entropy;
pub mod error;
pub mod evaluate;
pub mod forest;
pub mod likelihood;
pub mod plot;
pub mod rng;
pub mod tree;

pub use dataset::{Dataset, LabelColumn, SplitPair};
pub use entropy::EntropyUncertainty;
pub use error::{Error, Result};
pub use evaluate::{Criterion, ExperimentConfig};
pub use forest::{Forest, ForestConfig};
pub use likelihood::{LeafCounts, RlCache, RlUncertainty, SupportDegrees};
pub use tree::{ClassDistribution, DecisionTree, TreeConfig};

// Compile and run the guide's code listings as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/trees.md")]
    pub struct Trees;
    #[doc = include_str!("../../../book/src/entropy.md")]
    pub struct Entropy;
    #[doc = include_str!("../../../book/src/likelihood.md")]
    pub struct Likelihood;
    #[doc = include_str!("../../../book/src/rejection.md")]
    pub struct Rejection;
    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
}
