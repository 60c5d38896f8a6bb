use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PMAT_MAGIC: &[u8; 4] = b"PMAT";
pub const PMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Correlation,
    MiRaw,
    MiCalibrated,
    MiSurrMean,
    ExceedCount,
    Significant,
}

impl MatrixKind {
    pub fn code(self) -> u32 {
        match self {
            MatrixKind::Correlation => 0,
            MatrixKind::MiRaw => 1,
            MatrixKind::MiCalibrated => 2,
            MatrixKind::MiSurrMean => 3,
            MatrixKind::ExceedCount => 4,
            MatrixKind::Significant => 5,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => MatrixKind::Correlation,
            1 => MatrixKind::MiRaw,
            2 => MatrixKind::MiCalibrated,
            3 => MatrixKind::MiSurrMean,
            4 => MatrixKind::ExceedCount,
            5 => MatrixKind::Significant,
            _ => return None,
        })
    }
}

pub fn n_pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of pair (i, j), i < j, in the condensed upper triangle.
#[inline]
pub fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Condensed index of pair (i, i + 1).
#[inline]
pub(crate) fn condensed_index_row_start(n: usize, i: usize) -> usize {
    i * n - i * (i + 1) / 2
}

/// Inverse of [`condensed_index`].
pub fn pair_of(n: usize, idx: usize) -> (usize, usize) {
    debug_assert!(idx < n_pairs(n));
    // row i starts at i·n − i(i+1)/2; solve the quadratic, then fix rounding
    let nf = n as f64;
    let disc = (2.0 * nf - 1.0).powi(2) - 8.0 * idx as f64;
    let mut i = (((2.0 * nf - 1.0) - disc.max(0.0).sqrt()) / 2.0).floor() as usize;
    let start = |i: usize| i * n - i * (i + 1) / 2;
    while i > 0 && start(i) > idx {
        i -= 1;
    }
    while i + 1 < n && start(i + 1) <= idx {
        i += 1;
    }
    (i, idx - start(i) + i + 1)
}

/// Condensed symmetric N×N store of one per-pair statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMatrix {
    n: usize,
    kind: MatrixKind,
    stat: Vec<f32>,
}

impl PairMatrix {
    pub fn zeros(n: usize, kind: MatrixKind) -> Self {
        PairMatrix {
            n,
            kind,
            stat: vec![0.0; n_pairs(n)],
        }
    }

    pub fn from_condensed(n: usize, kind: MatrixKind, stat: Vec<f32>) -> Result<Self> {
        if stat.len() != n_pairs(n) {
            return Err(Error::Consistency(format!(
                "{} entries for {n} nodes, expected {}",
                stat.len(),
                n_pairs(n)
            )));
        }
        Ok(PairMatrix { n, kind, stat })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn stat(&self) -> &[f32] {
        &self.stat
    }

    pub(crate) fn stat_mut(&mut self) -> &mut [f32] {
        &mut self.stat
    }

    /// Entry for an unordered pair of distinct nodes.
    pub fn get(&self, i: usize, j: usize) -> f32 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.stat[condensed_index(self.n, a, b)]
    }

    pub fn iter_pairs(&self) -> impl Iterator<Item = ((usize, usize), f32)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j))).zip(self.stat.iter().copied())
    }
}

/// Splits a condensed array into one mutable slice per row (row i holds
/// pairs (i, i+1..n)).
pub(crate) fn split_rows<T>(n: usize, mut data: &mut [T]) -> Vec<&mut [T]> {
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let (row, rest) = std::mem::take(&mut data).split_at_mut(n - 1 - i);
        rows.push(row);
        data = rest;
    }
    rows
}

/// Binary layout: "PMAT", then version, n and kind as little-endian u32,
/// then the condensed payload as little-endian f32.
pub fn write_pmat(matrix: &PairMatrix, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + 4 * matrix.stat.len());
    bytes.extend_from_slice(PMAT_MAGIC);
    bytes.extend_from_slice(&PMAT_VERSION.to_le_bytes());
    let n = u32::try_from(matrix.n).map_err(|_| Error::Consistency("node count exceeds u32".into()))?;
    bytes.extend_from_slice(&n.to_le_bytes());
    bytes.extend_from_slice(&matrix.kind.code().to_le_bytes());
    for v in &matrix.stat {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pmat(path: &Path) -> Result<PairMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != PMAT_MAGIC {
        return Err(Error::format(path, "missing PMAT header"));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
    if word(1) != PMAT_VERSION {
        return Err(Error::format(path, format!("unsupported version {}", word(1))));
    }
    let n = word(2) as usize;
    let kind = MatrixKind::from_code(word(3))
        .ok_or_else(|| Error::format(path, format!("unknown matrix kind {}", word(3))))?;
    let payload = &bytes[16..];
    if payload.len() != 4 * n_pairs(n) {
        return Err(Error::format(
            path,
            format!("payload of {} bytes, expected {}", payload.len(), 4 * n_pairs(n)),
        ));
    }
    let stat = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(PairMatrix { n, kind, stat })
}
