//! Entropy-based uncertainty of an ensemble prediction.
//!
//! Given the class distributions predicted by M ensemble members for one
//! query, total uncertainty is the entropy of their mean, aleatoric
//! uncertainty is the mean of their entropies, and epistemic uncertainty is
//! the difference (an estimate of the mutual information between the label
//! and the ensemble member). All values are in bits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::ClassDistribution;

/// Negative differences down to this magnitude are rounding noise and are
/// reported as zero epistemic uncertainty.
pub const CLAMP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyUncertainty {
    pub total: f64,
    pub aleatoric: f64,
    pub epistemic: f64,
}

/// Shannon entropy in bits, with `0 log 0 = 0`.
pub fn shannon_entropy(dist: &ClassDistribution) -> f64 {
    entropy_bits(dist.probs())
}

fn entropy_bits(probs: &[f64]) -> f64 {
    // `0.0 - x` rather than `-x`, so a certain outcome gives +0, not -0.
    0.0 - probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.log2()).sum::<f64>()
}

fn check_ensemble(dists: &[ClassDistribution]) -> Result<usize> {
    let k = dists.first().ok_or(Error::EmptyEnsemble)?.class_count();
    if let Some(d) = dists.iter().find(|d| d.class_count() != k) {
        return Err(Error::ClassCountMismatch {
            expected: k,
            got: d.class_count(),
        });
    }
    Ok(k)
}

/// Mean member entropy.
pub fn aleatoric_entropy(dists: &[ClassDistribution]) -> Result<f64> {
    check_ensemble(dists)?;
    Ok(dists.iter().map(shannon_entropy).sum::<f64>() / dists.len() as f64)
}

/// Entropy of the mean member distribution.
pub fn total_entropy(dists: &[ClassDistribution]) -> Result<f64> {
    check_ensemble(dists)?;
    Ok(shannon_entropy(&ClassDistribution::mean(dists)?))
}

pub fn entropy_uncertainty(dists: &[ClassDistribution]) -> Result<EntropyUncertainty> {
    let total = total_entropy(dists)?;
    let aleatoric = aleatoric_entropy(dists)?;
    let mut epistemic = total - aleatoric;
    if (-CLAMP_TOLERANCE..0.0).contains(&epistemic) {
        epistemic = 0.0;
    }
    Ok(EntropyUncertainty {
        total,
        aleatoric,
        epistemic,
    })
}
