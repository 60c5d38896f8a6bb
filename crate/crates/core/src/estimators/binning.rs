use crate::error::{Error, Result};
use crate::preprocess::rank_order;

/// Largest supported bin count; joint cell indices must fit in a byte.
pub const MAX_BINS: usize = 16;

/// Equiquantal bin labels of one series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinLabels {
    labels: Vec<u8>,
    q: usize,
}

impl BinLabels {
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn occupancy(&self) -> Vec<usize> {
        let mut counts = vec![0; self.q];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

pub(crate) fn check_bins(len: usize, q: usize) -> Result<()> {
    if !(2..=MAX_BINS).contains(&q) {
        return Err(Error::Parameter(format!("bin count {q} outside 2..={MAX_BINS}")));
    }
    if len < q {
        return Err(Error::InsufficientData(format!(
            "{len} samples cannot fill {q} bins"
        )));
    }
    Ok(())
}

/// Label of the sample with ascending rank `r` (0-based) is ⌊r·Q/T⌋; ties are
/// ranked by time index. Labels depend on ranks only.
pub fn equiquantal_bins(x: &[f64], q: usize) -> Result<BinLabels> {
    check_bins(x.len(), q)?;
    let len = x.len();
    let mut labels = vec![0u8; len];
    for (rank, t) in rank_order(x).into_iter().enumerate() {
        labels[t] = (rank * q / len) as u8;
    }
    Ok(BinLabels { labels, q })
}

/// Per-bin occupancy implied by the labelling rule for a given (T, Q).
pub(crate) fn bin_sizes(len: usize, q: usize) -> Vec<usize> {
    let mut counts = vec![0; q];
    for rank in 0..len {
        counts[rank * q / len] += 1;
    }
    counts
}
