use super::binning::{bin_sizes, check_bins, BinLabels};
use crate::error::{Error, Result};

/// Plug-in mutual information over equiquantal joint histograms for a fixed
/// (T, Q).
///
/// Because every series is binned by rank, marginal occupancies are known in
/// advance and only the joint term varies between pairs:
/// `I = ln T + (Σ n_ab ln n_ab − Σ n_a ln n_a − Σ n_b ln n_b) / T`.
#[derive(Debug, Clone)]
pub struct MiKernel {
    len: usize,
    q: usize,
    nlogn: Vec<f64>,
    constant: f64,
    upper: f64,
}

impl MiKernel {
    pub fn new(len: usize, q: usize) -> Result<Self> {
        check_bins(len, q)?;
        let nlogn: Vec<f64> = (0..=len)
            .map(|n| if n == 0 { 0.0 } else { n as f64 * (n as f64).ln() })
            .collect();
        let marginal: f64 = bin_sizes(len, q).iter().map(|&n| nlogn[n]).sum();
        Ok(MiKernel {
            len,
            q,
            constant: (len as f64).ln() - 2.0 * marginal / len as f64,
            nlogn,
            upper: (q as f64).ln(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Raw MI from row labels pre-multiplied by Q (`a_scaled[t] = Q·label`) and
    /// plain column labels.
    #[inline]
    pub fn raw_scaled(&self, a_scaled: &[u8], b: &[u8]) -> f64 {
        debug_assert_eq!(a_scaled.len(), self.len);
        debug_assert_eq!(b.len(), self.len);
        let mut counts = [0u32; 256];
        for (&x, &y) in a_scaled.iter().zip(b) {
            counts[x.wrapping_add(y) as usize] += 1;
        }
        self.finish(&counts)
    }

    /// Sums the joint term in an order invariant under transposition, so
    /// swapping the two series gives a bit-identical result.
    #[inline]
    fn finish(&self, counts: &[u32; 256]) -> f64 {
        let q = self.q;
        let mut joint = 0.0;
        for a in 0..q {
            joint += self.nlogn[counts[a * q + a] as usize];
            for b in a + 1..q {
                joint += self.nlogn[counts[a * q + b] as usize] + self.nlogn[counts[b * q + a] as usize];
            }
        }
        (self.constant + joint / self.len as f64).clamp(0.0, self.upper)
    }

    pub fn raw(&self, x: &BinLabels, y: &BinLabels) -> Result<f64> {
        if x.len() != self.len || y.len() != self.len || x.q() != self.q || y.q() != self.q {
            return Err(Error::Consistency(format!(
                "labels (T={}, Q={}) and (T={}, Q={}) do not match kernel (T={}, Q={})",
                x.len(),
                x.q(),
                y.len(),
                y.q(),
                self.len,
                self.q
            )));
        }
        Ok(self.raw_scaled(&scale_labels(x.labels(), self.q), y.labels()))
    }
}

/// Multiplies labels by Q for use as the row argument of [`MiKernel::raw_scaled`].
pub(crate) fn scale_labels(labels: &[u8], q: usize) -> Vec<u8> {
    labels.iter().map(|&l| l * q as u8).collect()
}

/// Plug-in MI estimate in nats from two label sequences.
pub fn mutual_information_binned(x: &BinLabels, y: &BinLabels) -> Result<f64> {
    if x.len() != y.len() || x.q() != y.q() {
        return Err(Error::Consistency(format!(
            "label sequences differ: (T={}, Q={}) vs (T={}, Q={})",
            x.len(),
            x.q(),
            y.len(),
            y.q()
        )));
    }
    MiKernel::new(x.len(), x.q())?.raw(x, y)
}
