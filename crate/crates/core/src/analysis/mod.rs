//! All-pairs dependence matrices, surrogate significance testing and
//! node-level localization fields.

mod dossier;
mod engine;
mod fields;
mod matrix;
mod significance;

pub use dossier::{extract_pair, sample_pairs, PairDossier};
pub use engine::{pairwise_correlation, pairwise_mi, surrogate_mi_stats, surrogate_mi_batch};
pub use fields::{extra_normal_fields, node_average, FieldKind, NodeField, RELATIVE_FLOOR};
pub use matrix::{condensed_index, n_pairs, pair_of, read_pmat, write_pmat, MatrixKind, PairMatrix};
pub use significance::{significance, significance_threshold, SignificanceSummary};
