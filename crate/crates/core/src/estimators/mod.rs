//! Pairwise dependence measures.

mod binning;
mod calibration;
mod correlation;
mod mi;

pub use binning::{equiquantal_bins, BinLabels, MAX_BINS};
pub use calibration::{build_calibration, calibrate, default_rho_grid, CalibrationCurve, MIN_REPLICATES};
pub use correlation::{extra_normal, gaussian_mi, pearson, Standardized};
pub use mi::{mutual_information_binned, MiKernel};

/// Bin count used unless configured otherwise.
pub const DEFAULT_BINS: usize = 8;
