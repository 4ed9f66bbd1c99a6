//! Bootstrapped ensembles of probabilistic trees.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::tree::{validate_query, ClassDistribution, DecisionTree, TreeConfig};

/// Current model file layout.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub max_features: Option<usize>,
    /// Train share of each random split in experiments.
    pub train_fraction: f64,
    pub stratify: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 50,
            max_depth: 10,
            min_samples_split: 2,
            max_features: None,
            train_fraction: 0.7,
            stratify: false,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn tree_config(&self) -> TreeConfig {
        TreeConfig {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            max_features: self.max_features,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("a forest needs at least one tree".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.max_features == Some(0) {
            return Err(Error::InvalidConfig("max_features must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    format_version: u32,
    config: ForestConfig,
    label_map: Vec<String>,
    feature_names: Option<Vec<String>>,
    n_features: usize,
    class_count: usize,
    trees: Vec<DecisionTree>,
}

impl Forest {
    /// Fits `config.n_trees` trees, each on a bootstrap sample of size N
    /// drawn with replacement. Tree `i` draws all of its randomness from
    /// stream `i` of `config.seed`, so the result is independent of how
    /// the work is scheduled across threads.
    pub fn fit(train: &Dataset, config: &ForestConfig) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let tree_config = config.tree_config();
        let n = train.len();
        let trees = (0..config.n_trees)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng::stream_rng(config.seed, i as u64);
                let sample: Vec<usize> = (0..n).map(|_| rng::index_below(&mut rng, n)).collect();
                DecisionTree::fit_rows(train, &sample, &tree_config, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Forest {
            format_version: FORMAT_VERSION,
            config: *config,
            label_map: train.label_names().to_vec(),
            feature_names: train.feature_names().map(<[String]>::to_vec),
            n_features: train.n_features(),
            class_count: train.class_count(),
            trees,
        })
    }

    /// Assembles a forest from already built trees.
    pub fn from_trees(trees: Vec<DecisionTree>, label_map: Vec<String>, config: ForestConfig) -> Result<Self> {
        let first = trees.first().ok_or(Error::EmptyEnsemble)?;
        let (k, d) = (first.class_count(), first.n_features());
        for t in &trees {
            if t.class_count() != k {
                return Err(Error::ClassCountMismatch {
                    expected: k,
                    got: t.class_count(),
                });
            }
            if t.n_features() != d {
                return Err(Error::ArityMismatch {
                    expected: d,
                    got: t.n_features(),
                });
            }
        }
        if label_map.len() != k {
            return Err(Error::ClassCountMismatch {
                expected: k,
                got: label_map.len(),
            });
        }
        Ok(Forest {
            format_version: FORMAT_VERSION,
            config: ForestConfig {
                n_trees: trees.len(),
                ..config
            },
            label_map,
            feature_names: None,
            n_features: d,
            class_count: k,
            trees,
        })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn label_map(&self) -> &[String] {
        &self.label_map
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// One Laplace-corrected distribution per tree, in tree order.
    pub fn predict_proba_all(&self, x: &[f64]) -> Result<Vec<ClassDistribution>> {
        validate_query(x, self.n_features)?;
        self.trees.iter().map(|t| t.predict_proba(x)).collect()
    }

    /// Mean of the per-tree distributions.
    pub fn predict_proba(&self, x: &[f64]) -> Result<ClassDistribution> {
        ClassDistribution::mean(&self.predict_proba_all(x)?)
    }

    /// Soft-vote class: argmax of the mean distribution, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(self.predict_proba(x)?.argmax())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let forest: Forest = serde_json::from_reader(reader)?;
        forest.check_loaded()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let forest: Forest = serde_json::from_str(s)?;
        forest.check_loaded()
    }

    fn check_loaded(self) -> Result<Self> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedFormatVersion(self.format_version));
        }
        let rebuilt = self
            .trees
            .into_iter()
            .map(|t| DecisionTree::from_root(t.root().clone(), t.class_count(), t.n_features()))
            .collect::<Result<Vec<_>>>()?;
        let mut forest = Forest::from_trees(rebuilt, self.label_map, self.config)?;
        if forest.class_count != self.class_count || forest.n_features != self.n_features {
            return Err(Error::InvalidConfig("model header disagrees with its trees".into()));
        }
        forest.feature_names = self.feature_names;
        Ok(forest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_json(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_json(BufReader::new(file))
    }
}
