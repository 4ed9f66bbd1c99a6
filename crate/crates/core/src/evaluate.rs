//! Accuracy-rejection curves and the repeated-split experiment.
//!
//! A curve reports, for each rejection fraction `r` on a fixed grid, the
//! accuracy on the test instances that remain after abstaining on the
//! `floor(r * n)` most uncertain ones. A good uncertainty measure yields a
//! rising curve; rejecting at random yields a flat one in expectation.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::entropy::{entropy_uncertainty, EntropyUncertainty};
use crate::error::{Error, Result};
use crate::forest::{Forest, ForestConfig};
use crate::likelihood::{forest_rl_uncertainty, RlCache, RlUncertainty};
use crate::rng;

/// Default spacing of rejection fractions.
pub const DEFAULT_STEP: f64 = 0.02;

/// Uncertainty of one prediction under both methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceUncertainty {
    pub predicted: usize,
    pub entropy: EntropyUncertainty,
    /// Present only for binary models.
    pub likelihood: Option<RlUncertainty>,
}

pub fn instance_uncertainty(forest: &Forest, x: &[f64], cache: &RlCache) -> Result<InstanceUncertainty> {
    let dists = forest.predict_proba_all(x)?;
    let entropy = entropy_uncertainty(&dists)?;
    let predicted = crate::tree::ClassDistribution::mean(&dists)?.argmax();
    let likelihood = if forest.class_count() == 2 {
        Some(forest_rl_uncertainty(forest, x, cache)?)
    } else {
        None
    };
    Ok(InstanceUncertainty {
        predicted,
        entropy,
        likelihood,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    pub index: usize,
    pub truth: usize,
    pub uncertainty: InstanceUncertainty,
}

impl ScoredPrediction {
    pub fn predicted(&self) -> usize {
        self.uncertainty.predicted
    }

    pub fn is_correct(&self) -> bool {
        self.uncertainty.predicted == self.truth
    }
}

/// Scores arbitrary rows with known labels.
pub fn score_rows<'a>(
    forest: &Forest,
    rows: impl IntoIterator<Item = &'a [f64]>,
    truths: &[usize],
    cache: &RlCache,
) -> Result<Vec<ScoredPrediction>> {
    rows.into_iter()
        .zip(truths)
        .enumerate()
        .map(|(index, (x, &truth))| {
            Ok(ScoredPrediction {
                index,
                truth,
                uncertainty: instance_uncertainty(forest, x, cache)?,
            })
        })
        .collect()
}

pub fn score_test_set(forest: &Forest, test: &Dataset, cache: &RlCache) -> Result<Vec<ScoredPrediction>> {
    if test.n_features() != forest.n_features() {
        return Err(Error::ArityMismatch {
            expected: forest.n_features(),
            got: test.n_features(),
        });
    }
    if test.class_count() != forest.class_count() {
        return Err(Error::ClassCountMismatch {
            expected: forest.class_count(),
            got: test.class_count(),
        });
    }
    score_rows(forest, test.rows(), test.labels(), cache)
}

/// Quantity used to rank predictions for rejection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    AleatoricEntropy,
    EpistemicEntropy,
    TotalEntropy,
    AleatoricLikelihood,
    EpistemicLikelihood,
    Random,
}

impl Criterion {
    pub const ALL: [Criterion; 6] = [
        Criterion::AleatoricEntropy,
        Criterion::EpistemicEntropy,
        Criterion::TotalEntropy,
        Criterion::AleatoricLikelihood,
        Criterion::EpistemicLikelihood,
        Criterion::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::AleatoricEntropy => "au_ent",
            Criterion::EpistemicEntropy => "eu_ent",
            Criterion::TotalEntropy => "tu_ent",
            Criterion::AleatoricLikelihood => "au_rl",
            Criterion::EpistemicLikelihood => "eu_rl",
            Criterion::Random => "random",
        }
    }

    pub fn needs_binary(self) -> bool {
        matches!(self, Criterion::AleatoricLikelihood | Criterion::EpistemicLikelihood)
    }

    /// Every criterion that applies to a K-class task.
    pub fn applicable(class_count: usize) -> Vec<Criterion> {
        Criterion::ALL
            .into_iter()
            .filter(|c| class_count == 2 || !c.needs_binary())
            .collect()
    }

    /// Uncertainty value of `record`; `None` for [`Criterion::Random`] or a
    /// missing likelihood measure.
    pub fn score(self, record: &ScoredPrediction) -> Option<f64> {
        let u = &record.uncertainty;
        match self {
            Criterion::AleatoricEntropy => Some(u.entropy.aleatoric),
            Criterion::EpistemicEntropy => Some(u.entropy.epistemic),
            Criterion::TotalEntropy => Some(u.entropy.total),
            Criterion::AleatoricLikelihood => u.likelihood.map(|l| l.aleatoric),
            Criterion::EpistemicLikelihood => u.likelihood.map(|l| l.epistemic),
            Criterion::Random => None,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown criterion {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRejectionCurve {
    pub criterion: Criterion,
    /// `(rejection fraction, accuracy on retained instances)`.
    pub points: Vec<(f64, f64)>,
    pub n_test: usize,
}

impl AccuracyRejectionCurve {
    pub fn fractions(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn accuracies(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }
}

/// Rejection fractions `0, step, 2 step, ...` below 1, rounded to nine
/// decimals so that the grid prints cleanly.
pub fn rejection_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "rejection step must lie in (0, 1), got {step}"
        )));
    }
    Ok((0..)
        .map(|k| (k as f64 * step * 1e9).round() / 1e9)
        .take_while(|&r| r < 1.0)
        .collect())
}

/// Number of instances rejected at fraction `r`: `floor(r * n)`, never all.
pub fn reject_count(r: f64, n: usize) -> usize {
    ((r * n as f64 + 1e-9).floor() as usize).min(n.saturating_sub(1))
}

/// Curve for explicit per-instance scores: the highest scores are rejected
/// first and equal scores are rejected in index order.
pub fn curve_from_scores(correct: &[bool], scores: &[f64], step: f64) -> Result<Vec<(f64, f64)>> {
    if correct.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if correct.len() != scores.len() {
        return Err(Error::InvalidConfig(format!(
            "{} correctness flags for {} scores",
            correct.len(),
            scores.len()
        )));
    }
    let n = correct.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    // retained_correct[k] = correct predictions among order[k..].
    let mut retained_correct = vec![0usize; n + 1];
    for k in (0..n).rev() {
        retained_correct[k] = retained_correct[k + 1] + usize::from(correct[order[k]]);
    }
    Ok(rejection_grid(step)?
        .into_iter()
        .map(|r| {
            let k = reject_count(r, n);
            (r, retained_correct[k] as f64 / (n - k) as f64)
        })
        .collect())
}

/// Accuracy-rejection curve of `records` under `criterion`. The random
/// criterion rejects along a uniformly random order drawn from `seed`.
pub fn accuracy_rejection_curve(
    records: &[ScoredPrediction],
    criterion: Criterion,
    step: f64,
    seed: u64,
) -> Result<AccuracyRejectionCurve> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = records.len();
    // Equal scores fall back to the instance index, not the slice position.
    let mut by_index: Vec<&ScoredPrediction> = records.iter().collect();
    by_index.sort_by_key(|r| r.index);

    let scores: Vec<f64> = if criterion == Criterion::Random {
        let mut perm: Vec<usize> = (0..n).collect();
        rng::shuffle(&mut rng::stream_rng(seed, 0), &mut perm);
        let mut s = vec![0.0; n];
        for (rank, &i) in perm.iter().enumerate() {
            s[i] = (n - rank) as f64;
        }
        s
    } else {
        by_index
            .iter()
            .map(|r| {
                criterion
                    .score(r)
                    .ok_or_else(|| Error::UnsupportedTask(format!("criterion {criterion} needs a binary model")))
            })
            .collect::<Result<_>>()?
    };
    let correct: Vec<bool> = by_index.iter().map(|r| r.is_correct()).collect();
    Ok(AccuracyRejectionCurve {
        criterion,
        points: curve_from_scores(&correct, &scores, step)?,
        n_test: n,
    })
}

/// Point-wise mean and sample standard deviation over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanCurve {
    pub criterion: Criterion,
    pub fractions: Vec<f64>,
    pub mean: Vec<f64>,
    /// Sample standard deviation (divisor R - 1); zero when R = 1.
    pub std: Vec<f64>,
    pub n_repetitions: usize,
}

impl MeanCurve {
    pub fn aggregate(curves: &[AccuracyRejectionCurve]) -> Result<Self> {
        let first = curves.first().ok_or(Error::EmptyEnsemble)?;
        let fractions: Vec<f64> = first.fractions().collect();
        for c in curves {
            if c.criterion != first.criterion || c.points.len() != fractions.len() {
                return Err(Error::InvalidConfig("curves on different grids".into()));
            }
        }
        let r = curves.len() as f64;
        let mean: Vec<f64> = (0..fractions.len())
            .map(|i| curves.iter().map(|c| c.points[i].1).sum::<f64>() / r)
            .collect();
        let std = (0..fractions.len())
            .map(|i| {
                if curves.len() < 2 {
                    return 0.0;
                }
                let ss: f64 = curves.iter().map(|c| (c.points[i].1 - mean[i]).powi(2)).sum();
                (ss / (r - 1.0)).sqrt()
            })
            .collect();
        Ok(MeanCurve {
            criterion: first.criterion,
            fractions,
            mean,
            std,
            n_repetitions: curves.len(),
        })
    }

    /// Standard error of the mean at each grid point.
    pub fn standard_error(&self) -> Vec<f64> {
        let root = (self.n_repetitions as f64).sqrt();
        self.std.iter().map(|s| s / root).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Tree settings, split fraction, stratification and the experiment seed.
    pub forest: ForestConfig,
    pub repetitions: usize,
    pub step: f64,
    /// Empty means every criterion applicable to the data.
    pub criteria: Vec<Criterion>,
    pub tolerance: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            forest: ForestConfig::default(),
            repetitions: 100,
            step: DEFAULT_STEP,
            criteria: Vec::new(),
            tolerance: crate::likelihood::DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub curves: Vec<MeanCurve>,
    /// Plain test accuracy of each repetition.
    pub test_accuracy: Vec<f64>,
}

impl ExperimentResult {
    pub fn curve(&self, criterion: Criterion) -> Option<&MeanCurve> {
        self.curves.iter().find(|c| c.criterion == criterion)
    }

    /// CSV with columns
    /// `criterion,rejection_fraction,mean_accuracy,std_accuracy,n_repetitions`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "criterion",
            "rejection_fraction",
            "mean_accuracy",
            "std_accuracy",
            "n_repetitions",
        ])?;
        for c in &self.curves {
            for i in 0..c.fractions.len() {
                w.write_record([
                    c.criterion.name().to_string(),
                    c.fractions[i].to_string(),
                    c.mean[i].to_string(),
                    c.std[i].to_string(),
                    c.n_repetitions.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))
    }
}

/// Seeds of one repetition: (split, forest, random rejection).
pub fn repetition_seeds(seed: u64, repetition: usize) -> (u64, u64, u64) {
    let base = rng::derive_seed(seed, repetition as u64);
    (
        rng::derive_seed(base, 0),
        rng::derive_seed(base, 1),
        rng::derive_seed(base, 2),
    )
}

/// Repeated random train/test splits: fit, score, and average the curves.
/// Deterministic given `config.forest.seed`.
pub fn run_experiment(ds: &Dataset, config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.forest.validate()?;
    if config.repetitions == 0 {
        return Err(Error::InvalidConfig("need at least one repetition".into()));
    }
    rejection_grid(config.step)?;
    let criteria = if config.criteria.is_empty() {
        Criterion::applicable(ds.class_count())
    } else {
        config.criteria.clone()
    };
    if ds.class_count() != 2 {
        if let Some(c) = criteria.iter().find(|c| c.needs_binary()) {
            return Err(Error::UnsupportedTask(format!(
                "criterion {c} needs 2 classes, data has {}",
                ds.class_count()
            )));
        }
    }
    let cache = RlCache::new(crate::likelihood::DEFAULT_TABLE_MAX_TOTAL, config.tolerance)?;

    let per_rep = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| {
            let (split_seed, forest_seed, random_seed) = repetition_seeds(config.forest.seed, rep);
            let split = ds.split(config.forest.train_fraction, split_seed, config.forest.stratify)?;
            let forest = Forest::fit(
                &split.train,
                &ForestConfig {
                    seed: forest_seed,
                    ..config.forest
                },
            )?;
            let records = score_test_set(&forest, &split.test, &cache)?;
            let accuracy = records.iter().filter(|r| r.is_correct()).count() as f64 / records.len() as f64;
            let curves = criteria
                .iter()
                .map(|&c| accuracy_rejection_curve(&records, c, config.step, random_seed))
                .collect::<Result<Vec<_>>>()?;
            Ok((accuracy, curves))
        })
        .collect::<Result<Vec<_>>>()?;

    let curves = (0..criteria.len())
        .map(|ci| {
            let runs: Vec<AccuracyRejectionCurve> = per_rep.iter().map(|(_, c)| c[ci].clone()).collect();
            MeanCurve::aggregate(&runs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        curves,
        test_accuracy: per_rep.iter().map(|(a, _)| *a).collect(),
    })
}
