//! Row-parallel sweeps over the condensed pair range.
//!
//! Bin labels are computed once per node and shared read-only; each row of
//! the condensed triangle is an independent task, so results do not depend on
//! the worker count.

use log::debug;
use rayon::prelude::*;

use super::matrix::{n_pairs, split_rows, MatrixKind, PairMatrix};
use crate::error::{Error, Result};
use crate::estimators::{equiquantal_bins, CalibrationCurve, MiKernel, Standardized};
use crate::grid::TimeSeriesGrid;
use crate::surrogates::{SurrogateGenerator, SurrogateSpec};

/// Node-major bin labels, plain and pre-multiplied by Q.
pub(crate) struct PreparedLabels {
    len: usize,
    plain: Vec<u8>,
    scaled: Vec<u8>,
}

impl PreparedLabels {
    pub(crate) fn new(grid: &TimeSeriesGrid, q: usize) -> Result<Self> {
        let len = grid.len();
        let per_node = (0..grid.n_nodes())
            .into_par_iter()
            .map(|i| equiquantal_bins(grid.series(i), q).map(|b| b.labels().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let plain: Vec<u8> = per_node.into_iter().flatten().collect();
        let scaled = plain.iter().map(|&l| l * q as u8).collect();
        Ok(PreparedLabels { len, plain, scaled })
    }

    #[inline]
    pub(crate) fn raw_mi(&self, kernel: &MiKernel, i: usize, j: usize) -> f64 {
        let len = self.len;
        kernel.raw_scaled(
            &self.scaled[i * len..(i + 1) * len],
            &self.plain[j * len..(j + 1) * len],
        )
    }
}

/// Calibrated MI of one pair, exactly as stored in matrices and dossiers.
pub(crate) fn calibrated_pair(
    labels: &PreparedLabels,
    kernel: &MiKernel,
    curve: &CalibrationCurve,
    i: usize,
    j: usize,
) -> (f64, f64) {
    let raw = labels.raw_mi(kernel, i, j);
    (raw, curve.apply(raw))
}

/// Calibrated binned MI of every pair.
pub fn pairwise_mi(grid: &TimeSeriesGrid, q: usize, curve: &CalibrationCurve) -> Result<PairMatrix> {
    curve.ensure_matches(grid.len(), q)?;
    let kernel = MiKernel::new(grid.len(), q)?;
    let labels = PreparedLabels::new(grid, q)?;
    let n = grid.n_nodes();
    let mut out = PairMatrix::zeros(n, MatrixKind::MiCalibrated);
    split_rows(n, out.stat_mut())
        .into_par_iter()
        .enumerate()
        .for_each(|(i, row)| {
            for (k, slot) in row.iter_mut().enumerate() {
                *slot = calibrated_pair(&labels, &kernel, curve, i, i + 1 + k).1 as f32;
            }
        });
    Ok(out)
}

pub(crate) fn standardize_all(grid: &TimeSeriesGrid) -> Result<Vec<Standardized>> {
    (0..grid.n_nodes())
        .into_par_iter()
        .map(|i| {
            Standardized::new(grid.series(i)).ok_or_else(|| Error::Degenerate {
                node: i,
                msg: "constant series has no correlation".into(),
            })
        })
        .collect()
}

/// Pearson correlation of every pair.
pub fn pairwise_correlation(grid: &TimeSeriesGrid) -> Result<PairMatrix> {
    let z = standardize_all(grid)?;
    let n = grid.n_nodes();
    let mut out = PairMatrix::zeros(n, MatrixKind::Correlation);
    split_rows(n, out.stat_mut())
        .into_par_iter()
        .enumerate()
        .for_each(|(i, row)| {
            for (k, slot) in row.iter_mut().enumerate() {
                *slot = z[i].correlation(&z[i + 1 + k]) as f32;
            }
        });
    Ok(out)
}

fn check_inputs(
    grid: &TimeSeriesGrid,
    spec: &SurrogateSpec,
    q: usize,
    curve: &CalibrationCurve,
    data_mi: &PairMatrix,
) -> Result<()> {
    curve.ensure_matches(grid.len(), q)?;
    if data_mi.kind() != MatrixKind::MiCalibrated {
        return Err(Error::Consistency(format!(
            "data matrix has kind {:?}, expected calibrated MI",
            data_mi.kind()
        )));
    }
    if data_mi.n() != grid.n_nodes() {
        return Err(Error::Consistency(format!(
            "data matrix covers {} nodes, grid has {}",
            data_mi.n(),
            grid.n_nodes()
        )));
    }
    if spec.n_surr == 0 || spec.n_surr > u16::MAX as usize {
        return Err(Error::Consistency(format!(
            "ensemble size {} outside 1..={}",
            spec.n_surr,
            u16::MAX
        )));
    }
    Ok(())
}

/// Streams the surrogate ensemble, keeping per pair the mean calibrated
/// surrogate MI and the number of surrogates whose MI is strictly below the
/// data MI (ties do not count). Only one surrogate is alive at a time.
///
/// Comparisons happen at the stored `f32` precision of `data_mi`.
pub fn surrogate_mi_stats(
    grid: &TimeSeriesGrid,
    spec: &SurrogateSpec,
    q: usize,
    curve: &CalibrationCurve,
    data_mi: &PairMatrix,
) -> Result<(PairMatrix, PairMatrix)> {
    check_inputs(grid, spec, q, curve, data_mi)?;
    let kernel = MiKernel::new(grid.len(), q)?;
    let generator = SurrogateGenerator::new(grid)?;
    let n = grid.n_nodes();
    let mut sums = vec![0.0f64; n_pairs(n)];
    let mut exceed = vec![0u16; n_pairs(n)];
    let data = data_mi.stat();

    for k in 0..spec.n_surr {
        let surrogate = generator.generate_index(spec, k);
        let labels = PreparedLabels::new(&surrogate, q)?;
        let sum_rows = split_rows(n, &mut sums);
        let exceed_rows = split_rows(n, &mut exceed);
        sum_rows
            .into_par_iter()
            .zip(exceed_rows)
            .enumerate()
            .for_each(|(i, (sum_row, exceed_row))| {
                let base = super::matrix::condensed_index_row_start(n, i);
                for (off, (s, e)) in sum_row.iter_mut().zip(exceed_row.iter_mut()).enumerate() {
                    let (_, cal) = calibrated_pair(&labels, &kernel, curve, i, i + 1 + off);
                    *s += cal;
                    if (cal as f32) < data[base + off] {
                        *e += 1;
                    }
                }
            });
        debug!("surrogate {}/{} done", k + 1, spec.n_surr);
    }

    let count = spec.n_surr as f64;
    let mean = sums.iter().map(|s| (s / count) as f32).collect();
    let exceed = exceed.iter().map(|&e| f32::from(e)).collect();
    Ok((
        PairMatrix::from_condensed(n, MatrixKind::MiSurrMean, mean)?,
        PairMatrix::from_condensed(n, MatrixKind::ExceedCount, exceed)?,
    ))
}

/// Reference implementation of [`surrogate_mi_stats`] that stores every
/// surrogate's full calibrated matrix before reducing. Memory grows with the
/// ensemble size; meant for verification on small grids.
pub fn surrogate_mi_batch(
    grid: &TimeSeriesGrid,
    spec: &SurrogateSpec,
    q: usize,
    curve: &CalibrationCurve,
    data_mi: &PairMatrix,
) -> Result<(PairMatrix, PairMatrix)> {
    check_inputs(grid, spec, q, curve, data_mi)?;
    let kernel = MiKernel::new(grid.len(), q)?;
    let n = grid.n_nodes();
    let matrices: Vec<Vec<f64>> = crate::surrogates::generate_ensemble_par(grid, *spec)?
        .iter()
        .map(|s| {
            let labels = PreparedLabels::new(s, q)?;
            let mut m = Vec::with_capacity(n_pairs(n));
            for i in 0..n {
                for j in i + 1..n {
                    m.push(calibrated_pair(&labels, &kernel, curve, i, j).1);
                }
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let count = spec.n_surr as f64;
    let mut mean = Vec::with_capacity(n_pairs(n));
    let mut exceed = Vec::with_capacity(n_pairs(n));
    for p in 0..n_pairs(n) {
        let mut s = 0.0;
        let mut e = 0u16;
        for m in &matrices {
            s += m[p];
            e += u16::from((m[p] as f32) < data_mi.stat()[p]);
        }
        mean.push((s / count) as f32);
        exceed.push(f32::from(e));
    }
    Ok((
        PairMatrix::from_condensed(n, MatrixKind::MiSurrMean, mean)?,
        PairMatrix::from_condensed(n, MatrixKind::ExceedCount, exceed)?,
    ))
}
