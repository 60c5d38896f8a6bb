use serde::{Deserialize, Serialize};

use super::matrix::{MatrixKind, PairMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceSummary {
    pub alpha: f64,
    pub n_surr: usize,
    /// Minimum exceedance count for a pair to be significant.
    pub threshold: usize,
    pub significant_pairs: usize,
    pub total_pairs: usize,
    pub fraction: f64,
}

/// ⌈(1 − α)(n_surr + 1)⌉: 95 for α = 0.05 and 99 surrogates.
pub fn significance_threshold(alpha: f64, n_surr: usize) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha {alpha} outside (0, 1)")));
    }
    // the small offset absorbs rounding in (1 − α)(n + 1) for exact products
    let threshold = ((1.0 - alpha) * (n_surr as f64 + 1.0) - 1e-9).ceil() as usize;
    if threshold > n_surr {
        return Err(Error::Config(format!(
            "alpha {alpha} needs an exceedance count of {threshold}, more than the {n_surr} surrogates"
        )));
    }
    Ok(threshold.max(1))
}

/// Marks pairs whose data MI beat at least the threshold number of surrogates.
pub fn significance(
    exceed: &PairMatrix,
    alpha: f64,
    n_surr: usize,
) -> Result<(PairMatrix, SignificanceSummary)> {
    if exceed.kind() != MatrixKind::ExceedCount {
        return Err(Error::Consistency(format!(
            "expected exceedance counts, got {:?}",
            exceed.kind()
        )));
    }
    let threshold = significance_threshold(alpha, n_surr)?;
    if let Some(bad) = exceed.stat().iter().find(|&&e| e < 0.0 || e > n_surr as f32 || e.fract() != 0.0) {
        return Err(Error::Consistency(format!(
            "exceedance count {bad} is not an integer in 0..={n_surr}"
        )));
    }
    let flags: Vec<f32> = exceed
        .stat()
        .iter()
        .map(|&e| if e as usize >= threshold { 1.0 } else { 0.0 })
        .collect();
    let significant_pairs = flags.iter().filter(|&&f| f == 1.0).count();
    let total_pairs = flags.len();
    let summary = SignificanceSummary {
        alpha,
        n_surr,
        threshold,
        significant_pairs,
        total_pairs,
        fraction: significant_pairs as f64 / total_pairs as f64,
    };
    Ok((
        PairMatrix::from_condensed(exceed.n(), MatrixKind::Significant, flags)?,
        summary,
    ))
}
