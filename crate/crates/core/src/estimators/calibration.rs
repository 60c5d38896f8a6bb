//! Monte Carlo bias recalibration of binned MI estimates.
//!
//! For each correlation on a grid, bivariate Gaussian samples of the target
//! length are binned and their mean raw MI is paired with the analytic value
//! −½ ln(1 − ρ²). The knots are made monotone with pooled adjacent violators
//! and evaluated by piecewise-linear interpolation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binning::check_bins;
use super::mi::{scale_labels, MiKernel};
use super::{equiquantal_bins, gaussian_mi};
use crate::error::{Error, Result};
use crate::rng::derive_stream;
use crate::synth::gen_gaussian_pair;

/// Minimum Monte Carlo replicates per knot.
pub const MIN_REPLICATES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    #[serde(rename = "T")]
    pub len: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    pub seed: u64,
    pub replicates: usize,
    /// `[raw_mi, true_mi]` pairs, strictly increasing in raw.
    pub knots: Vec<[f64; 2]>,
}

/// {0, 0.05, ..., 0.95}.
pub fn default_rho_grid() -> Vec<f64> {
    (0..20).map(|k| k as f64 / 20.0).collect()
}

pub fn build_calibration(
    len: usize,
    q: usize,
    rho_grid: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<CalibrationCurve> {
    check_bins(len, q)?;
    if replicates < MIN_REPLICATES {
        return Err(Error::Config(format!(
            "calibration needs at least {MIN_REPLICATES} replicates, got {replicates}"
        )));
    }
    if rho_grid.len() < 2 || rho_grid[0] != 0.0 {
        return Err(Error::Config(
            "rho grid must start at 0 and hold at least two values".into(),
        ));
    }
    if rho_grid.windows(2).any(|w| !(w[0] < w[1])) || !(rho_grid[rho_grid.len() - 1] < 1.0) {
        return Err(Error::Config(
            "rho grid must be strictly increasing within [0, 1)".into(),
        ));
    }
    let kernel = MiKernel::new(len, q)?;

    let mut raw_means = Vec::with_capacity(rho_grid.len());
    for (k, &rho) in rho_grid.iter().enumerate() {
        let knot_seed = derive_stream(seed, k as u64);
        let values: Vec<f64> = (0..replicates)
            .into_par_iter()
            .map(|rep| -> Result<f64> {
                let (x, y) = gen_gaussian_pair(rho, len, derive_stream(knot_seed, rep as u64))?;
                let lx = equiquantal_bins(&x, q)?;
                let ly = equiquantal_bins(&y, q)?;
                Ok(kernel.raw_scaled(&scale_labels(lx.labels(), q), ly.labels()))
            })
            .collect::<Result<_>>()?;
        raw_means.push(values.iter().sum::<f64>() / replicates as f64);
    }
    let truths = rho_grid
        .iter()
        .map(|&r| gaussian_mi(r))
        .collect::<Result<Vec<_>>>()?;

    Ok(CalibrationCurve {
        len,
        q,
        seed,
        replicates,
        knots: monotone_knots(&raw_means, &truths),
    })
}

/// Pools adjacent violators of increasing raw means; each pooled block keeps
/// the smallest true value it covers, so the first knot stays at 0.
fn monotone_knots(raw: &[f64], truth: &[f64]) -> Vec<[f64; 2]> {
    // blocks of (sum, count, first index)
    let mut blocks: Vec<(f64, usize, usize)> = Vec::with_capacity(raw.len());
    for (i, &r) in raw.iter().enumerate() {
        blocks.push((r, 1, i));
        while blocks.len() > 1 {
            let (s1, c1, _) = blocks[blocks.len() - 1];
            let (s0, c0, _) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 >= s1 / c1 as f64 {
                blocks.pop();
                let last = blocks.last_mut().unwrap();
                last.0 += s1;
                last.1 += c1;
            } else {
                break;
            }
        }
    }
    blocks
        .into_iter()
        .map(|(s, c, first)| [s / c as f64, truth[first]])
        .collect()
}

impl CalibrationCurve {
    pub fn ensure_matches(&self, len: usize, q: usize) -> Result<()> {
        if self.len != len || self.q != q {
            return Err(Error::Consistency(format!(
                "calibration built for (T={}, Q={}) but data has (T={len}, Q={q})",
                self.len, self.q
            )));
        }
        Ok(())
    }

    /// Piecewise-linear map through the knots; clamps to 0 below the first knot
    /// and extends the final segment above the last.
    pub fn apply(&self, raw: f64) -> f64 {
        let k = &self.knots;
        if raw <= k[0][0] {
            return 0.0;
        }
        let upper = k.partition_point(|p| p[0] < raw);
        if upper < k.len() && k[upper][0] == raw {
            return k[upper][1];
        }
        let seg = upper.min(k.len() - 1) - 1;
        let ([x0, y0], [x1, y1]) = (k[seg], k[seg + 1]);
        (y0 + (raw - x0) * (y1 - y0) / (x1 - x0)).max(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.knots;
        if k.len() < 2 {
            return Err(Error::Config("calibration curve needs at least two knots".into()));
        }
        if k[0][1] != 0.0 {
            return Err(Error::Config("first calibration knot must map to 0".into()));
        }
        if k.windows(2).any(|w| !(w[0][0] < w[1][0]) || w[0][1] > w[1][1]) {
            return Err(Error::Config("calibration knots are not monotone".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let curve: CalibrationCurve = serde_json::from_str(text)?;
        curve.validate()?;
        Ok(curve)
    }
}

/// Calibrates a raw estimate obtained at (T = `len`, Q = `q`).
pub fn calibrate(raw_mi: f64, len: usize, q: usize, curve: &CalibrationCurve) -> Result<f64> {
    curve.ensure_matches(len, q)?;
    Ok(curve.apply(raw_mi))
}
