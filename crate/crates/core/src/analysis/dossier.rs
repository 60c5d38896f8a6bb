use std::fmt::Write as _;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::engine::{calibrated_pair, PreparedLabels};
use super::matrix::{n_pairs, pair_of};
use crate::error::{Error, Result};
use crate::estimators::{gaussian_mi, CalibrationCurve, MiKernel, Standardized};
use crate::grid::{NodeMeta, TimeSeriesGrid};
use crate::preprocess::phase_std;
use crate::rng::stream_rng;

/// Everything needed to plot and inspect one pair outside this crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDossier {
    pub i: usize,
    pub j: usize,
    pub node_i: NodeMeta,
    pub node_j: NodeMeta,
    pub time_start: usize,
    pub period: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub phase_std_x: Vec<f64>,
    pub phase_std_y: Vec<f64>,
    pub correlation: f64,
    pub mi_raw: f64,
    pub mi_calibrated: f64,
    /// −½ ln(1 − r²); absent when |r| = 1.
    pub gaussian_mi: Option<f64>,
}

impl PairDossier {
    /// Scatter/time-series table: `t,phase,x,y` with 1-based calendar phase.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,phase,x,y\n");
        for (t, (a, b)) in self.x.iter().zip(&self.y).enumerate() {
            let phase = (self.time_start - 1 + t) % self.period + 1;
            writeln!(out, "{t},{phase},{a},{b}").unwrap();
        }
        out
    }
}

/// Builds the dossier of pair (i, j) using the same estimator path as the
/// all-pairs matrices, so stored values agree after `f32` rounding.
pub fn extract_pair(
    grid: &TimeSeriesGrid,
    i: usize,
    j: usize,
    q: usize,
    curve: &CalibrationCurve,
) -> Result<PairDossier> {
    let n = grid.n_nodes();
    if i == j || i >= n || j >= n {
        return Err(Error::Bounds(format!("pair ({i}, {j}) invalid for {n} nodes")));
    }
    curve.ensure_matches(grid.len(), q)?;
    let (a, b) = (i.min(j), i.max(j));
    let kernel = MiKernel::new(grid.len(), q)?;
    let pair = TimeSeriesGrid::from_series(
        vec![grid.series(a).to_vec(), grid.series(b).to_vec()],
        vec![grid.nodes()[a], grid.nodes()[b]],
        grid.time_start(),
        grid.period(),
        grid.label(),
    )?;
    let labels = PreparedLabels::new(&pair, q)?;
    let (mi_raw, mi_calibrated) = calibrated_pair(&labels, &kernel, curve, 0, 1);
    let degenerate = |node| Error::Degenerate {
        node,
        msg: "constant series has no correlation".into(),
    };
    let za = Standardized::new(grid.series(a)).ok_or_else(|| degenerate(a))?;
    let zb = Standardized::new(grid.series(b)).ok_or_else(|| degenerate(b))?;
    let correlation = za.correlation(&zb);
    Ok(PairDossier {
        i,
        j,
        node_i: grid.nodes()[i],
        node_j: grid.nodes()[j],
        time_start: grid.time_start(),
        period: grid.period(),
        x: grid.series(i).to_vec(),
        y: grid.series(j).to_vec(),
        phase_std_x: phase_std(grid, grid.series(i)),
        phase_std_y: phase_std(grid, grid.series(j)),
        correlation,
        mi_raw,
        mi_calibrated,
        gaussian_mi: gaussian_mi(correlation).ok(),
    })
}

/// `k` distinct pairs drawn uniformly without replacement.
pub fn sample_pairs(n: usize, k: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let total = n_pairs(n);
    if k > total {
        return Err(Error::Config(format!("cannot sample {k} of {total} pairs")));
    }
    let mut rng = stream_rng(seed);
    Ok(sample(&mut rng, total, k)
        .into_iter()
        .map(|idx| pair_of(n, idx))
        .collect())
}
