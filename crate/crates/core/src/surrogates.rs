//! Multivariate Fourier-transform surrogates.
//!
//! Each surrogate rotates the phase of every positive frequency bin by a random
//! angle that is shared by all nodes. Amplitude spectra, and with them every
//! auto- and cross-covariance, survive exactly; non-Gaussian structure does not.
//! DC and (for even T) Nyquist bins are never rotated.

use std::f64::consts::TAU;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{save_grid_with_provenance, GridFormat, TimeSeriesGrid};
use crate::rng::{derive_stream, stream_rng, DERIVATION_RULE};

pub const DEFAULT_SURROGATES: usize = 99;

/// Identifies one reproducible surrogate ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub master_seed: u64,
    pub n_surr: usize,
}

impl SurrogateSpec {
    pub fn new(master_seed: u64, n_surr: usize) -> Self {
        SurrogateSpec { master_seed, n_surr }
    }

    /// Stream seed of surrogate `index`.
    pub fn stream_seed(&self, index: usize) -> u64 {
        derive_stream(self.master_seed, index as u64)
    }

    pub fn derivation(&self) -> &'static str {
        DERIVATION_RULE
    }
}

/// Holds the forward spectra of a grid so that many surrogates can be drawn
/// with one inverse transform per node each.
pub struct SurrogateGenerator<'a> {
    grid: &'a TimeSeriesGrid,
    spectra: Vec<Complex<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl<'a> SurrogateGenerator<'a> {
    pub fn new(grid: &'a TimeSeriesGrid) -> Result<Self> {
        let len = grid.len();
        if len < 4 {
            return Err(Error::InsufficientData(format!(
                "surrogates need T >= 4, got {len}"
            )));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let mut spectra: Vec<Complex<f64>> = grid.values().iter().map(|&v| Complex::new(v, 0.0)).collect();
        spectra
            .par_chunks_mut(len)
            .for_each(|chunk| forward.process(chunk));
        Ok(SurrogateGenerator {
            grid,
            spectra,
            inverse,
        })
    }

    /// Number of rotated frequency bins, 1..=(T−1)/2.
    fn n_phases(&self) -> usize {
        (self.grid.len() - 1) / 2
    }

    pub fn generate(&self, stream_seed: u64) -> TimeSeriesGrid {
        let len = self.grid.len();
        let mut rng = stream_rng(stream_seed);
        let rotations: Vec<Complex<f64>> = (0..self.n_phases())
            .map(|_| Complex::from_polar(1.0, rng.random::<f64>() * TAU))
            .collect();
        let mut values = vec![0.0; self.spectra.len()];
        values
            .par_chunks_mut(len)
            .zip(self.spectra.par_chunks(len))
            .for_each(|(out, spectrum)| {
                let mut buf = spectrum.to_vec();
                for (k, rot) in rotations.iter().enumerate() {
                    let k = k + 1;
                    buf[k] *= rot;
                    buf[len - k] *= rot.conj();
                }
                self.inverse.process(&mut buf);
                let scale = 1.0 / len as f64;
                for (o, c) in out.iter_mut().zip(&buf) {
                    *o = c.re * scale;
                }
            });
        self.grid.with_values(values)
    }

    pub fn generate_index(&self, spec: &SurrogateSpec, index: usize) -> TimeSeriesGrid {
        self.generate(spec.stream_seed(index))
    }
}

/// One surrogate of `grid` drawn from `stream_seed`.
pub fn ft_surrogate(grid: &TimeSeriesGrid, stream_seed: u64) -> Result<TimeSeriesGrid> {
    Ok(SurrogateGenerator::new(grid)?.generate(stream_seed))
}

/// Lazily yields surrogates 0..n_surr in index order.
pub fn generate_ensemble<'a>(
    generator: &'a SurrogateGenerator<'a>,
    spec: SurrogateSpec,
) -> impl Iterator<Item = TimeSeriesGrid> + 'a {
    (0..spec.n_surr).map(move |k| generator.generate_index(&spec, k))
}

/// Materializes the whole ensemble, generating surrogates in parallel.
pub fn generate_ensemble_par(grid: &TimeSeriesGrid, spec: SurrogateSpec) -> Result<Vec<TimeSeriesGrid>> {
    let generator = SurrogateGenerator::new(grid)?;
    Ok((0..spec.n_surr)
        .into_par_iter()
        .map(|k| generator.generate_index(&spec, k))
        .collect())
}

/// Writes surrogate `index` in a grid format, with its seeds in the sidecar.
pub fn save_surrogate(
    surrogate: &TimeSeriesGrid,
    path: &Path,
    format: GridFormat,
    spec: &SurrogateSpec,
    index: usize,
) -> Result<()> {
    let provenance = serde_json::json!({
        "surrogate": {
            "master_seed": spec.master_seed,
            "index": index,
            "stream_seed": spec.stream_seed(index),
            "derivation": DERIVATION_RULE,
        }
    });
    save_grid_with_provenance(surrogate, path, format, Some(provenance))
}
