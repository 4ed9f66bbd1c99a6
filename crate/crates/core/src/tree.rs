//! Probabilistic decision trees.
//!
//! Trees are grown greedily top-down with the Gini criterion. Leaves keep
//! the raw per-class training counts rather than a class decision: the
//! entropy measures use their Laplace-corrected frequencies and the
//! likelihood measures use the counts themselves.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Tolerance used when validating externally supplied distributions.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// A probability vector over K classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    /// Validates that `probs` is non-empty, finite, non-negative and sums to
    /// one within [`DISTRIBUTION_TOLERANCE`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("no classes".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "{probs:?} has a negative or non-finite entry"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("{probs:?} sums to {sum}")));
        }
        Ok(ClassDistribution(probs))
    }

    /// Laplace-corrected relative frequencies `(c_y + 1) / (n + K)`.
    pub fn laplace(counts: &[u64]) -> Self {
        let k = counts.len() as f64;
        let total: u64 = counts.iter().sum();
        let denom = total as f64 + k;
        ClassDistribution(counts.iter().map(|&c| (c as f64 + 1.0) / denom).collect())
    }

    /// Component-wise mean of equally weighted distributions.
    pub fn mean(dists: &[ClassDistribution]) -> Result<Self> {
        let first = dists.first().ok_or(Error::EmptyEnsemble)?;
        let k = first.class_count();
        let mut acc = vec![0.0; k];
        for d in dists {
            if d.class_count() != k {
                return Err(Error::ClassCountMismatch {
                    expected: k,
                    got: d.class_count(),
                });
            }
            for (a, p) in acc.iter_mut().zip(&d.0) {
                *a += p;
            }
        }
        let m = dists.len() as f64;
        acc.iter_mut().for_each(|a| *a /= m);
        Ok(ClassDistribution(acc))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn class_count(&self) -> usize {
        self.0.len()
    }

    /// Most probable class; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

impl AsRef<[f64]> for ClassDistribution {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Features examined per node; `None` means `ceil(sqrt(D))`.
    pub max_features: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 10,
            min_samples_split: 2,
            max_features: None,
        }
    }
}

impl TreeConfig {
    pub fn features_per_node(&self, n_features: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }
}

/// A tree node. Inputs with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        counts: Vec<u64>,
    },
}

impl TreeNode {
    fn leaf_for(&self, x: &[f64]) -> &[u64] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
                TreeNode::Leaf { counts } => return counts,
            }
        }
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a [u64]>) {
        match self {
            TreeNode::Internal { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
            TreeNode::Leaf { counts } => out.push(counts),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    root: TreeNode,
    depth: usize,
    class_count: usize,
    n_features: usize,
}

pub(crate) fn validate_query(x: &[f64], n_features: usize) -> Result<()> {
    if x.len() != n_features {
        return Err(Error::ArityMismatch {
            expected: n_features,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(())
}

impl DecisionTree {
    /// Fits a tree on every row of `data`.
    pub fn fit<R: Rng + ?Sized>(data: &Dataset, config: &TreeConfig, rng: &mut R) -> Result<Self> {
        let rows: Vec<usize> = (0..data.len()).collect();
        Self::fit_rows(data, &rows, config, rng)
    }

    /// Fits a tree on the rows listed in `rows`; repeated indices count once
    /// per occurrence, as in a bootstrap sample.
    pub fn fit_rows<R: Rng + ?Sized>(data: &Dataset, rows: &[usize], config: &TreeConfig, rng: &mut R) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut builder = Builder {
            data,
            config,
            k: config.features_per_node(data.n_features()),
            rng,
            depth: 0,
        };
        let mut rows = rows.to_vec();
        let root = builder.grow(&mut rows, 0);
        Ok(DecisionTree {
            root,
            depth: builder.depth,
            class_count: data.class_count(),
            n_features: data.n_features(),
        })
    }

    /// Builds a tree from an explicit node structure.
    pub fn from_root(root: TreeNode, class_count: usize, n_features: usize) -> Result<Self> {
        fn check(node: &TreeNode, k: usize, d: usize) -> Result<usize> {
            match node {
                TreeNode::Leaf { counts } if counts.len() == k => Ok(0),
                TreeNode::Leaf { counts } => Err(Error::ClassCountMismatch {
                    expected: k,
                    got: counts.len(),
                }),
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= d || !threshold.is_finite() {
                        return Err(Error::InvalidConfig(format!(
                            "bad split on feature {feature} at {threshold}"
                        )));
                    }
                    Ok(1 + check(left, k, d)?.max(check(right, k, d)?))
                }
            }
        }
        let depth = check(&root, class_count, n_features)?;
        Ok(DecisionTree {
            root,
            depth,
            class_count,
            n_features,
        })
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Per-class counts of the leaf whose region contains `x`, and their total.
    pub fn leaf_counts(&self, x: &[f64]) -> Result<(&[u64], u64)> {
        validate_query(x, self.n_features)?;
        let counts = self.root.leaf_for(x);
        Ok((counts, counts.iter().sum()))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<ClassDistribution> {
        let (counts, _) = self.leaf_counts(x)?;
        Ok(ClassDistribution::laplace(counts))
    }

    /// Leaf count vectors in left-to-right order.
    pub fn leaves(&self) -> Vec<&[u64]> {
        let mut out = Vec::new();
        self.root.collect_leaves(&mut out);
        out
    }
}

/// Gini impurity of a count vector.
pub fn gini(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Size-weighted Gini impurity of a two-way split.
pub fn weighted_gini(left: &[u64], right: &[u64]) -> f64 {
    let nl: u64 = left.iter().sum();
    let nr: u64 = right.iter().sum();
    let n = (nl + nr) as f64;
    (nl as f64 * gini(left) + nr as f64 * gini(right)) / n
}

/// Split quality `sum_y l_y^2 / n_l + sum_y r_y^2 / n_r` held as an exact
/// fraction. Larger is better; it equals `n * (1 - weighted_gini)`.
#[derive(Debug, Clone, Copy)]
struct SplitScore {
    num: u128,
    den: u128,
}

impl SplitScore {
    fn new(left: &[u64], right: &[u64]) -> Self {
        let sq = |c: &[u64]| c.iter().map(|&v| (v as u128) * (v as u128)).sum::<u128>();
        let nl: u128 = left.iter().map(|&v| v as u128).sum();
        let nr: u128 = right.iter().map(|&v| v as u128).sum();
        SplitScore {
            num: sq(left) * nr + sq(right) * nl,
            den: nl * nr,
        }
    }

    fn cmp(&self, other: &SplitScore) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    score: SplitScore,
}

impl Candidate {
    /// True when `self` should replace `best`: higher score, then lower
    /// feature index, then lower threshold.
    fn beats(&self, best: &Candidate) -> bool {
        match self.score.cmp(&best.score) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => (self.feature, self.threshold) < (best.feature, best.threshold),
        }
    }
}

struct Builder<'a, R: ?Sized> {
    data: &'a Dataset,
    config: &'a TreeConfig,
    k: usize,
    rng: &'a mut R,
    depth: usize,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let t = a / 2.0 + b / 2.0;
    if t >= b || t < a {
        a
    } else {
        t
    }
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn counts(&self, rows: &[usize]) -> Vec<u64> {
        let mut counts = vec![0u64; self.data.class_count()];
        for &r in rows {
            counts[self.data.label(r)] += 1;
        }
        counts
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize) -> TreeNode {
        self.depth = self.depth.max(depth);
        let counts = self.counts(rows);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if depth >= self.config.max_depth || pure || rows.len() < self.config.min_samples_split {
            return TreeNode::Leaf { counts };
        }
        let Some(best) = self.best_split(rows, &counts) else {
            return TreeNode::Leaf { counts };
        };
        let mut left_len = 0;
        for i in 0..rows.len() {
            if self.data.row(rows[i])[best.feature] <= best.threshold {
                rows.swap(i, left_len);
                left_len += 1;
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(left_len);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        TreeNode::Internal {
            feature: best.feature,
            threshold: best.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Visits features in random order until `k` non-constant ones have been
    /// examined, keeping the best split among them.
    fn best_split(&mut self, rows: &[usize], parent: &[u64]) -> Option<Candidate> {
        let n_features = self.data.n_features();
        let mut order: Vec<usize> = (0..n_features).collect();
        rng::shuffle(self.rng, &mut order);

        let mut best: Option<Candidate> = None;
        let mut examined = 0;
        let mut column: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
        for &feature in &order {
            if examined == self.k {
                break;
            }
            column.clear();
            column.extend(rows.iter().map(|&r| (self.data.row(r)[feature], self.data.label(r))));
            column.sort_by(|a, b| a.0.total_cmp(&b.0));
            if column[0].0 == column[column.len() - 1].0 {
                continue;
            }
            examined += 1;

            let mut left = vec![0u64; parent.len()];
            let mut right = parent.to_vec();
            for i in 0..column.len() - 1 {
                let (v, y) = column[i];
                left[y] += 1;
                right[y] -= 1;
                let next = column[i + 1].0;
                if v == next {
                    continue;
                }
                let cand = Candidate {
                    feature,
                    threshold: midpoint(v, next),
                    score: SplitScore::new(&left, &right),
                };
                if best.as_ref().is_none_or(|b| cand.beats(b)) {
                    best = Some(cand);
                }
            }
        }
        best
    }
}
