//! Relative-likelihood uncertainty for binary classification.
//!
//! Inside one leaf a tree predicts a constant probability `θ` for the
//! positive class. With `n` positive and `p` negative training instances in
//! the leaf, the likelihood of `θ` is proportional to `θ^n (1-θ)^p` and is
//! maximised at `θ_ml = n / (n + p)`. Dividing by that maximum gives the
//! normalised likelihood, a plausibility in `[0, 1]`.
//!
//! The support for the positive class is the largest value of
//! `min(plausibility(θ), 2θ - 1)` over `θ ∈ [0, 1]`: how plausible is it
//! that a hypothesis favours the positive class by a wide margin. The
//! negative class uses `1 - 2θ`. Epistemic uncertainty is the smaller of
//! the two supports (both classes remain plausible), aleatoric uncertainty
//! is one minus the larger (neither class is supported).
//!
//! The supremum is found by evaluating the objective on a fixed grid of
//! [`GRID_POINTS`] values, bisecting every grid cell where the plausibility
//! curve crosses the margin line, and taking the best of all candidates
//! (grid points, crossings and `θ_ml`). Because the result depends only on
//! the leaf counts, values are cached per `(n, p)` in [`RlCache`].

use std::collections::{BTreeMap, HashMap};
use std::sync::{OnceLock, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::Forest;

/// Grid resolution used to bracket curve crossings.
pub const GRID_POINTS: usize = 1001;

/// Default absolute accuracy of support degrees.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Default largest `n + p` held in the precomputed part of [`RlCache`].
pub const DEFAULT_TABLE_MAX_TOTAL: u64 = 256;

/// Training instances of each class inside one leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LeafCounts {
    pub positive: u64,
    pub negative: u64,
}

impl LeafCounts {
    pub fn new(positive: u64, negative: u64) -> Self {
        LeafCounts { positive, negative }
    }

    pub fn total(&self) -> u64 {
        self.positive + self.negative
    }

    pub fn swapped(&self) -> Self {
        LeafCounts::new(self.negative, self.positive)
    }

    /// Maximum-likelihood estimate of the positive-class probability, or
    /// `None` for an empty leaf.
    pub fn theta_ml(&self) -> Option<f64> {
        (self.total() > 0).then(|| self.positive as f64 / self.total() as f64)
    }
}

/// Degrees of support for the two classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportDegrees {
    pub positive: f64,
    pub negative: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlUncertainty {
    pub epistemic: f64,
    pub aleatoric: f64,
}

impl From<SupportDegrees> for RlUncertainty {
    fn from(s: SupportDegrees) -> Self {
        RlUncertainty {
            epistemic: s.positive.min(s.negative),
            aleatoric: 1.0 - s.positive.max(s.negative),
        }
    }
}

/// `k * ln(x)` with `0 * ln(0) = 0`.
fn xlog(k: u64, ln_x: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * ln_x
    }
}

fn log_likelihood(theta: f64, c: LeafCounts) -> f64 {
    xlog(c.positive, theta.ln()) + xlog(c.negative, (-theta).ln_1p())
}

/// `θ^n (1-θ)^p / (θ_ml^n (1-θ_ml)^p)`, evaluated in log space. An empty
/// leaf has constant likelihood, so the result is 1 for every `θ`.
pub fn normalized_likelihood(theta: f64, counts: LeafCounts) -> f64 {
    let Some(ml) = counts.theta_ml() else {
        return 1.0;
    };
    let theta = theta.clamp(0.0, 1.0);
    let log_ratio = log_likelihood(theta, counts) - log_likelihood(ml, counts);
    log_ratio.exp().min(1.0)
}

/// `sup_θ min(plausibility(θ), 2θ - 1)` to absolute accuracy `tol`.
fn positive_support(counts: LeafCounts, tol: f64) -> f64 {
    let objective = |t: f64| normalized_likelihood(t, counts).min(2.0 * t - 1.0);
    let gap = |t: f64| normalized_likelihood(t, counts) - (2.0 * t - 1.0);

    let mut best = counts.theta_ml().map_or(f64::NEG_INFINITY, objective);
    let step = 1.0 / (GRID_POINTS - 1) as f64;
    let mut prev_t = 0.0;
    let mut prev_gap = gap(0.0);
    best = best.max(objective(0.0));
    for i in 1..GRID_POINTS {
        let t = if i == GRID_POINTS - 1 { 1.0 } else { i as f64 * step };
        let g = gap(t);
        best = best.max(objective(t));
        if (prev_gap > 0.0) != (g > 0.0) && prev_gap != 0.0 && g != 0.0 {
            let (mut lo, mut hi) = (prev_t, t);
            let lo_positive = prev_gap > 0.0;
            // Stop at width tol/4: the margin line has slope 2, so the
            // objective at the bracket ends is within tol/2 of the crossing.
            while hi - lo > tol / 4.0 {
                let mid = lo + (hi - lo) / 2.0;
                if mid <= lo || mid >= hi {
                    break;
                }
                if (gap(mid) > 0.0) == lo_positive {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            best = best.max(objective(lo)).max(objective(hi));
        }
        prev_t = t;
        prev_gap = g;
    }
    best.clamp(0.0, 1.0)
}

/// Support degrees of both classes. The negative-class support is computed
/// as the positive-class support of the mirrored counts (substituting
/// `θ -> 1 - θ`), so swapping the counts swaps the supports exactly.
pub fn support_degrees(counts: LeafCounts, tol: f64) -> Result<SupportDegrees> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }
    Ok(SupportDegrees {
        positive: positive_support(counts, tol),
        negative: positive_support(counts.swapped(), tol),
    })
}

pub fn rl_uncertainty(counts: LeafCounts, tol: f64) -> Result<RlUncertainty> {
    support_degrees(counts, tol).map(RlUncertainty::from)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub support: SupportDegrees,
    pub uncertainty: RlUncertainty,
}

/// Every `(n, p)` with `n + p <= max_total`, keyed in `(n, p)` order.
pub fn build_uncertainty_table(max_total: u64, tol: f64) -> Result<BTreeMap<LeafCounts, TableEntry>> {
    let keys: Vec<LeafCounts> = (0..=max_total)
        .flat_map(|n| (0..=max_total - n).map(move |p| LeafCounts::new(n, p)))
        .collect();
    keys.into_par_iter()
        .map(|c| {
            let support = support_degrees(c, tol)?;
            Ok((
                c,
                TableEntry {
                    support,
                    uncertainty: support.into(),
                },
            ))
        })
        .collect()
}

/// Memo of per-leaf uncertainties. Leaves with `n + p <= max_total` live in
/// a dense lazily filled table; larger leaves go to a locked map.
#[derive(Debug)]
pub struct RlCache {
    tol: f64,
    max_total: u64,
    dense: Vec<OnceLock<RlUncertainty>>,
    overflow: RwLock<HashMap<LeafCounts, RlUncertainty>>,
}

impl Default for RlCache {
    fn default() -> Self {
        RlCache::new(DEFAULT_TABLE_MAX_TOTAL, DEFAULT_TOLERANCE).expect("default tolerance is positive")
    }
}

impl RlCache {
    pub fn new(max_total: u64, tol: f64) -> Result<Self> {
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
        }
        let size = ((max_total + 1) * (max_total + 2) / 2) as usize;
        Ok(RlCache {
            tol,
            max_total,
            dense: (0..size).map(|_| OnceLock::new()).collect(),
            overflow: RwLock::new(HashMap::new()),
        })
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    fn slot(&self, c: LeafCounts) -> Option<&OnceLock<RlUncertainty>> {
        let t = c.total();
        (t <= self.max_total).then(|| &self.dense[(t * (t + 1) / 2 + c.positive) as usize])
    }

    fn compute(&self, c: LeafCounts) -> RlUncertainty {
        rl_uncertainty(c, self.tol).expect("tolerance validated at construction")
    }

    pub fn get(&self, c: LeafCounts) -> RlUncertainty {
        if let Some(slot) = self.slot(c) {
            return *slot.get_or_init(|| self.compute(c));
        }
        if let Some(u) = self.overflow.read().expect("cache lock poisoned").get(&c) {
            return *u;
        }
        let u = self.compute(c);
        self.overflow.write().expect("cache lock poisoned").insert(c, u);
        u
    }
}

/// Mean per-tree relative-likelihood uncertainty at `x`. Class 1 is the
/// positive class.
pub fn forest_rl_uncertainty(forest: &Forest, x: &[f64], cache: &RlCache) -> Result<RlUncertainty> {
    if forest.class_count() != 2 {
        return Err(Error::UnsupportedTask(format!(
            "relative-likelihood uncertainty needs 2 classes, model has {}",
            forest.class_count()
        )));
    }
    let mut epistemic = 0.0;
    let mut aleatoric = 0.0;
    for tree in forest.trees() {
        let (counts, _) = tree.leaf_counts(x)?;
        let u = cache.get(LeafCounts::new(counts[1], counts[0]));
        epistemic += u.epistemic;
        aleatoric += u.aleatoric;
    }
    let m = forest.trees().len() as f64;
    Ok(RlUncertainty {
        epistemic: epistemic / m,
        aleatoric: aleatoric / m,
    })
}
