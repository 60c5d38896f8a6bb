use serde::{Deserialize, Serialize};

use super::matrix::{MatrixKind, PairMatrix};
use crate::error::{Error, Result};
use crate::grid::NodeMeta;

/// Nodes whose mean MI is at or below this many nats get no relative value.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    MiMean,
    MiSurrMean,
    ExtraNormal,
    ExtraNormalRelative,
}

/// One scalar per node; `None` marks an undefined entry.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeField {
    kind: FieldKind,
    nodes: Vec<NodeMeta>,
    values: Vec<Option<f64>>,
}

impl NodeField {
    pub fn new(kind: FieldKind, nodes: Vec<NodeMeta>, values: Vec<Option<f64>>) -> Result<Self> {
        if nodes.len() != values.len() {
            return Err(Error::Consistency(format!(
                "{} values for {} nodes",
                values.len(),
                nodes.len()
            )));
        }
        Ok(NodeField { kind, nodes, values })
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn nodes(&self) -> &[NodeMeta] {
        &self.nodes
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Mean over the N − 1 pairs that involve each node.
pub fn node_average(matrix: &PairMatrix, nodes: &[NodeMeta]) -> Result<NodeField> {
    let kind = match matrix.kind() {
        MatrixKind::MiCalibrated | MatrixKind::MiRaw => FieldKind::MiMean,
        MatrixKind::MiSurrMean => FieldKind::MiSurrMean,
        other => {
            return Err(Error::Consistency(format!(
                "node averages are defined for MI matrices, got {other:?}"
            )))
        }
    };
    let n = matrix.n();
    if nodes.len() != n {
        return Err(Error::Consistency(format!(
            "matrix has {n} nodes, metadata lists {}",
            nodes.len()
        )));
    }
    let mut sums = vec![0.0f64; n];
    for ((i, j), v) in matrix.iter_pairs() {
        sums[i] += f64::from(v);
        sums[j] += f64::from(v);
    }
    let divisor = (n - 1) as f64;
    NodeField::new(kind, nodes.to_vec(), sums.into_iter().map(|s| Some(s / divisor)).collect())
}

/// Signed difference I(i) − I_surr(i), and max(difference, 0) / I(i) where
/// I(i) exceeds [`RELATIVE_FLOOR`].
pub fn extra_normal_fields(mi: &NodeField, surr: &NodeField) -> Result<(NodeField, NodeField)> {
    if mi.len() != surr.len()
        || mi
            .nodes
            .iter()
            .zip(&surr.nodes)
            .any(|(a, b)| a.lat != b.lat || a.lon != b.lon)
    {
        return Err(Error::Consistency("fields cover different nodes".into()));
    }
    let diff: Vec<Option<f64>> = mi
        .values
        .iter()
        .zip(&surr.values)
        .map(|(a, b)| Some((*a)? - (*b)?))
        .collect();
    let relative = mi
        .values
        .iter()
        .zip(&diff)
        .map(|(m, d)| match (m, d) {
            (Some(m), Some(d)) if *m > RELATIVE_FLOOR => Some(d.max(0.0) / m),
            _ => None,
        })
        .collect();
    Ok((
        NodeField::new(FieldKind::ExtraNormal, mi.nodes.clone(), diff)?,
        NodeField::new(FieldKind::ExtraNormalRelative, mi.nodes.clone(), relative)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nodes(n: usize) -> Vec<NodeMeta> {
        (0..n).map(|i| NodeMeta::new(i as f64, 0.0, i)).collect()
    }

    fn mi(n: usize, v: Vec<f32>) -> PairMatrix {
        PairMatrix::from_condensed(n, MatrixKind::MiCalibrated, v).unwrap()
    }

    #[test]
    fn hand_computed_averages() {
        let f = node_average(&mi(3, vec![0.3, 0.1, 0.2]), &nodes(3)).unwrap();
        let expect = [0.2, 0.25, 0.15];
        for (v, e) in f.values().iter().zip(expect) {
            assert!((v.unwrap() - e).abs() < 1e-7);
        }
        let f = node_average(&mi(2, vec![0.7]), &nodes(2)).unwrap();
        assert_eq!(f.values(), &[Some(f64::from(0.7f32)); 2]);
        let f = node_average(&mi(4, vec![0.0; 6]), &nodes(4)).unwrap();
        assert!(f.values().iter().all(|v| *v == Some(0.0)));
    }

    #[test]
    fn permutation_equivariance() {
        // relabel nodes (0,1,2,3) -> (2,0,3,1)
        let perm = [2usize, 0, 3, 1];
        let vals: Vec<f32> = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let m = mi(4, vals.clone());
        let mut permuted = vec![0.0f32; 6];
        for ((i, j), v) in m.iter_pairs() {
            let (a, b) = (perm[i].min(perm[j]), perm[i].max(perm[j]));
            permuted[super::super::condensed_index(4, a, b)] = v;
        }
        let f = node_average(&m, &nodes(4)).unwrap();
        let g = node_average(&mi(4, permuted), &nodes(4)).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert!((f.values()[i].unwrap() - g.values()[p].unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_kind_rejected() {
        let m = PairMatrix::from_condensed(2, MatrixKind::ExceedCount, vec![3.0]).unwrap();
        assert!(node_average(&m, &nodes(2)).is_err());
        assert!(node_average(&mi(2, vec![0.1]), &nodes(3)).is_err());
    }

    #[test]
    fn extra_normal_arithmetic() {
        let a = NodeField::new(FieldKind::MiMean, nodes(3), vec![Some(0.05), Some(1e-7), Some(0.1)]).unwrap();
        let b = NodeField::new(FieldKind::MiSurrMean, nodes(3), vec![Some(0.04), Some(0.0), Some(0.12)]).unwrap();
        let (d, r) = extra_normal_fields(&a, &b).unwrap();
        assert!((d.values()[0].unwrap() - 0.01).abs() < 1e-15);
        assert!((r.values()[0].unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(r.values()[1], None);
        assert!(d.values()[2].unwrap() < 0.0);
        assert_eq!(r.values()[2], Some(0.0));

        let (d, _) = extra_normal_fields(&a, &a).unwrap();
        assert!(d.values().iter().all(|v| *v == Some(0.0)));

        let short = NodeField::new(FieldKind::MiSurrMean, nodes(2), vec![Some(0.0); 2]).unwrap();
        assert!(extra_normal_fields(&a, &short).is_err());
    }
}
