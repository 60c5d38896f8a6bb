//! Grid-to-grid preprocessing transforms: anomalies, marginal Gaussianization,
//! per-phase variance normalization and linear detrending.
//!
//! Every transform works node by node and is parallel across nodes with
//! deterministic output. Standard deviations use the sample (n − 1) divisor.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::grid::TimeSeriesGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Anomaly,
    Gaussianize,
    Varnorm,
    Detrend,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Anomaly => "anomaly",
            Stage::Gaussianize => "gaussianize",
            Stage::Varnorm => "varnorm",
            Stage::Detrend => "detrend",
        }
    }

    pub fn apply(self, grid: &TimeSeriesGrid) -> Result<TimeSeriesGrid> {
        match self {
            Stage::Anomaly => remove_annual_cycle(grid),
            Stage::Gaussianize => marginal_gaussianize(grid),
            Stage::Varnorm => normalize_seasonal_variance(grid),
            Stage::Detrend => detrend_linear(grid),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "anomaly" => Ok(Stage::Anomaly),
            "gaussianize" => Ok(Stage::Gaussianize),
            "varnorm" => Ok(Stage::Varnorm),
            "detrend" => Ok(Stage::Detrend),
            other => Err(Error::Config(format!("unknown preprocessing stage '{other}'"))),
        }
    }
}

/// An ordered list of stages, each used at most once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Stage>", into = "Vec<Stage>")]
pub struct Pipeline {
    stages: Vec<Stage>,
}

impl Pipeline {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        for (k, s) in stages.iter().enumerate() {
            if stages[..k].contains(s) {
                return Err(Error::Config(format!("stage '{s}' listed twice")));
            }
        }
        Ok(Pipeline { stages })
    }

    /// anomaly → varnorm → detrend.
    pub fn standard() -> Self {
        Pipeline {
            stages: vec![Stage::Anomaly, Stage::Varnorm, Stage::Detrend],
        }
    }

    /// Parses a comma-separated list such as `anomaly,varnorm`.
    pub fn parse(list: &str) -> Result<Self> {
        let stages = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        Self::new(stages)
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.stages.iter().map(|s| s.name()).collect()
    }

    pub fn apply(&self, grid: &TimeSeriesGrid) -> Result<TimeSeriesGrid> {
        let mut current = grid.clone();
        for stage in &self.stages {
            current = stage.apply(&current).map_err(|e| e.in_stage(stage.name()))?;
        }
        Ok(current)
    }
}

impl TryFrom<Vec<Stage>> for Pipeline {
    type Error = Error;

    fn try_from(stages: Vec<Stage>) -> Result<Self> {
        Pipeline::new(stages)
    }
}

impl From<Pipeline> for Vec<Stage> {
    fn from(p: Pipeline) -> Self {
        p.stages
    }
}

/// Applies `f(node, series, out)` to every node in parallel.
fn map_nodes<F>(grid: &TimeSeriesGrid, f: F) -> Result<TimeSeriesGrid>
where
    F: Fn(usize, &[f64], &mut [f64]) -> Result<()> + Sync,
{
    let len = grid.len();
    let mut values = vec![0.0; grid.values().len()];
    values
        .par_chunks_mut(len)
        .zip(grid.values().par_chunks(len))
        .enumerate()
        .try_for_each(|(node, (out, series))| f(node, series, out))?;
    Ok(grid.with_values(values))
}

/// Per-phase sums and counts of a series.
fn phase_stats(grid: &TimeSeriesGrid, series: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut sums = vec![0.0; grid.period()];
    let mut counts = vec![0usize; grid.period()];
    for (t, &v) in series.iter().enumerate() {
        let p = grid.phase_of(t);
        sums[p] += v;
        counts[p] += 1;
    }
    (sums, counts)
}

/// Sample standard deviation of each calendar phase of a series.
pub fn phase_std(grid: &TimeSeriesGrid, series: &[f64]) -> Vec<f64> {
    let (sums, counts) = phase_stats(grid, series);
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let mut ss = vec![0.0; grid.period()];
    for (t, &v) in series.iter().enumerate() {
        let p = grid.phase_of(t);
        ss[p] += (v - means[p]).powi(2);
    }
    ss.iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 1 { (s / (c - 1) as f64).sqrt() } else { f64::NAN })
        .collect()
}

/// Subtracts the mean of each calendar phase from every node series.
pub fn remove_annual_cycle(grid: &TimeSeriesGrid) -> Result<TimeSeriesGrid> {
    map_nodes(grid, |_, series, out| {
        let (sums, counts) = phase_stats(grid, series);
        if let Some(p) = counts.iter().position(|&c| c < 2) {
            return Err(Error::InsufficientData(format!(
                "phase {} has {} samples, need at least 2",
                p + 1,
                counts[p]
            )));
        }
        let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
        for (t, (o, &v)) in out.iter_mut().zip(series).enumerate() {
            *o = v - means[grid.phase_of(t)];
        }
        Ok(())
    })
}

/// Normal scores Φ⁻¹((r − 0.5)/T) for ascending ranks r = 1..T.
pub fn normal_scores(len: usize) -> Vec<f64> {
    let normal = Normal::standard();
    (1..=len)
        .map(|r| normal.inverse_cdf((r as f64 - 0.5) / len as f64))
        .collect()
}

/// Ascending rank order of a series, ties broken by time index.
pub(crate) fn rank_order(series: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..series.len()).collect();
    // stable sort keeps equal values in time order
    order.sort_by(|&a, &b| series[a].total_cmp(&series[b]));
    order
}

/// Replaces each node series by its normal scores.
///
/// Rejects series where a single value repeats more than T/2 times.
pub fn marginal_gaussianize(grid: &TimeSeriesGrid) -> Result<TimeSeriesGrid> {
    let scores = normal_scores(grid.len());
    map_nodes(grid, |node, series, out| {
        let order = rank_order(series);
        let mut run = 1;
        for w in order.windows(2) {
            run = if series[w[0]] == series[w[1]] { run + 1 } else { 1 };
            if 2 * run > series.len() {
                let msg = if run == series.len() {
                    "constant series".to_string()
                } else {
                    format!("value {} repeats {run} times", series[w[0]])
                };
                return Err(Error::Degenerate { node, msg });
            }
        }
        for (rank, &t) in order.iter().enumerate() {
            out[t] = scores[rank];
        }
        Ok(())
    })
}

/// Divides each calendar phase of every node by that phase's sample std.
pub fn normalize_seasonal_variance(grid: &TimeSeriesGrid) -> Result<TimeSeriesGrid> {
    map_nodes(grid, |node, series, out| {
        let std = phase_std(grid, series);
        if let Some(p) = std.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::DegeneratePhase { node, phase: p + 1 });
        }
        for (t, (o, &v)) in out.iter_mut().zip(series).enumerate() {
            *o = v / std[grid.phase_of(t)];
        }
        Ok(())
    })
}

/// Least-squares intercept and slope of `series` against t = 0..T−1.
pub fn ols_line(series: &[f64]) -> (f64, f64) {
    let n = series.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let x_mean = series.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, &x) in series.iter().enumerate() {
        let dt = t as f64 - t_mean;
        sxy += dt * (x - x_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    (x_mean - slope * t_mean, slope)
}

/// Subtracts the per-node least-squares line over t = 0..T−1.
pub fn detrend_linear(grid: &TimeSeriesGrid) -> Result<TimeSeriesGrid> {
    if grid.len() < 3 {
        return Err(Error::InsufficientData("detrending needs T >= 3".into()));
    }
    map_nodes(grid, |_, series, out| {
        let n = series.len() as f64;
        let t_mean = (n - 1.0) / 2.0;
        let x_mean = series.iter().sum::<f64>() / n;
        let (_, slope) = ols_line(series);
        for (t, (o, &x)) in out.iter_mut().zip(series).enumerate() {
            *o = (x - x_mean) - slope * (t as f64 - t_mean);
        }
        Ok(())
    })
}
