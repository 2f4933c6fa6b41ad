//! Agglomerative clustering of the symmetrized weight matrix.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::SquareMatrix;
use crate::network::SymmetricMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("all off-diagonal weights are zero")]
    ZeroMatrix,
    #[error("need at least 2 items to cluster, got {0}")]
    TooFewItems(usize),
    #[error("unknown linkage {0:?}")]
    UnknownLinkage(String),
    #[error("{labels} labels for {leaves} leaves")]
    LabelMismatch { labels: usize, leaves: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Linkage {
    /// UPGMA: size-weighted mean of member distances.
    #[default]
    Average,
    Single,
    Complete,
}

impl std::str::FromStr for Linkage {
    type Err = ClusterError;

    fn from_str(s: &str) -> Result<Self, ClusterError> {
        match s {
            "average" => Ok(Self::Average),
            "single" => Ok(Self::Single),
            "complete" => Ok(Self::Complete),
            other => Err(ClusterError::UnknownLinkage(other.to_string())),
        }
    }
}

/// `d(i, j) = 1 - s(i, j) / s_max`, with `s_max` the largest off-diagonal
/// weight. The strongest pair is at distance 0, unrelated pairs at 1.
pub fn distance_matrix(sym: &SymmetricMatrix) -> Result<SymmetricMatrix, ClusterError> {
    let s = sym.values();
    let n = s.dim();
    let s_max = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|c| s[c])
        .fold(0.0f64, f64::max);
    if s_max <= 0.0 {
        return Err(ClusterError::ZeroMatrix);
    }
    let d = SquareMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { 1.0 - s[(i, j)] / s_max });
    Ok(SymmetricMatrix::new(sym.entities().to_vec(), d).expect("distance of symmetric input is symmetric"))
}

/// One agglomeration step. Leaves are `0..n`, merge k creates node `n + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub id: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
}

/// Merges the closest pair of clusters until one remains.
///
/// A cluster is addressed by its smallest leaf index. Exact ties go to the
/// pair with the smallest (left, right) addresses; the left child is the one
/// holding the smaller leaf.
pub fn agglomerate(d: &SymmetricMatrix, linkage: Linkage) -> Result<Dendrogram, ClusterError> {
    let n = d.len();
    if n < 2 {
        return Err(ClusterError::TooFewItems(n));
    }
    let mut dist = d.values().clone();
    let mut active = vec![true; n];
    let mut node = (0..n).collect::<Vec<usize>>();
    let mut size = vec![1usize; n];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in (0..n).filter(|&a| active[a]) {
            for b in (a + 1..n).filter(|&b| active[b]) {
                let x = dist[(a, b)];
                if best.is_none_or(|(_, _, h)| x < h) {
                    best = Some((a, b, x));
                }
            }
        }
        let (a, b, height) = best.expect("at least two active clusters");
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in (0..n).filter(|&k| active[k] && k != a && k != b) {
            let (da, db) = (dist[(a, k)], dist[(b, k)]);
            let merged = match linkage {
                Linkage::Average => ((na * da + nb * db) / (na + nb)).clamp(da.min(db), da.max(db)),
                Linkage::Single => da.min(db),
                Linkage::Complete => da.max(db),
            };
            dist[(a, k)] = merged;
            dist[(k, a)] = merged;
        }
        let id = n + step;
        merges.push(Merge { left: node[a], right: node[b], height, id, size: size[a] + size[b] });
        active[b] = false;
        node[a] = id;
        size[a] += size[b];
    }
    Ok(Dendrogram { n_leaves: n, merges })
}

impl Dendrogram {
    fn children(&self, id: usize) -> Option<(usize, usize)> {
        id.checked_sub(self.n_leaves).and_then(|k| self.merges.get(k)).map(|m| (m.left, m.right))
    }

    fn height(&self, id: usize) -> f64 {
        id.checked_sub(self.n_leaves).map_or(0.0, |k| self.merges[k].height)
    }

    fn root(&self) -> usize {
        self.merges.last().map_or(0, |m| m.id)
    }

    /// Merge heights never decrease.
    pub fn is_monotone(&self) -> bool {
        self.merges.windows(2).all(|w| w[0].height <= w[1].height)
    }

    /// Leaves in left-first depth-first order.
    pub fn leaf_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_leaves);
        let mut stack = vec![self.root()];
        while let Some(id) = stack.pop() {
            match self.children(id) {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => out.push(id),
            }
        }
        out
    }

    /// Newick tree; each branch is as long as the height gap to its parent.
    pub fn to_newick(&self, labels: &[String]) -> Result<String, ClusterError> {
        if labels.len() != self.n_leaves {
            return Err(ClusterError::LabelMismatch { labels: labels.len(), leaves: self.n_leaves });
        }
        fn label(s: &str) -> String {
            if s.chars().any(|c| "()[]':;, \t".contains(c)) {
                format!("'{}'", s.replace('\'', "''"))
            } else {
                s.to_string()
            }
        }
        fn walk(d: &Dendrogram, id: usize, labels: &[String], out: &mut String) {
            match d.children(id) {
                Some((l, r)) => {
                    out.push('(');
                    for (k, child) in [l, r].into_iter().enumerate() {
                        if k > 0 {
                            out.push(',');
                        }
                        walk(d, child, labels, out);
                        let _ = write!(out, ":{}", d.height(id) - d.height(child));
                    }
                    out.push(')');
                }
                None => out.push_str(&label(&labels[id])),
            }
        }
        let mut out = String::new();
        walk(self, self.root(), labels, &mut out);
        out.push(';');
        Ok(out)
    }
}

/// Convenience for the tree-per-period export.
pub fn leaf_order(dend: &Dendrogram) -> Vec<usize> {
    dend.leaf_order()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(rows: &[Vec<f64>]) -> SymmetricMatrix {
        SymmetricMatrix::from_matrix(SquareMatrix::from_rows(rows).unwrap()).unwrap()
    }

    fn three_node() -> SymmetricMatrix {
        sym(&[vec![0.0, 0.1, 0.8], vec![0.1, 0.0, 0.6], vec![0.8, 0.6, 0.0]])
    }

    #[test]
    fn distances_from_weights() {
        let d = distance_matrix(&sym(&[vec![0.0, 4.0], vec![4.0, 0.0]])).unwrap();
        assert_eq!(d.values().to_rows(), vec![vec![0.0, 0.0], vec![0.0, 0.0]]);

        let w = sym(&[vec![0.0, 4.0, 2.0], vec![4.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]]);
        let d = distance_matrix(&w).unwrap();
        assert_eq!((d.values()[(0, 1)], d.values()[(0, 2)], d.values()[(1, 2)]), (0.0, 0.5, 1.0));

        let scaled = SymmetricMatrix::from_matrix(w.values().scaled(8.0)).unwrap();
        assert_eq!(distance_matrix(&scaled).unwrap().values(), d.values());

        assert_eq!(distance_matrix(&sym(&[vec![0.0; 2], vec![0.0; 2]])).unwrap_err(), ClusterError::ZeroMatrix);
    }

    #[test]
    fn two_leaves() {
        let d = agglomerate(&sym(&[vec![0.0, 0.3], vec![0.3, 0.0]]), Linkage::Average).unwrap();
        assert_eq!(d.merges, vec![Merge { left: 0, right: 1, height: 0.3, id: 2, size: 2 }]);
        assert_eq!(d.leaf_order(), vec![0, 1]);
    }

    #[test]
    fn upgma_three_nodes() {
        let d = agglomerate(&three_node(), Linkage::Average).unwrap();
        assert_eq!(d.merges[0], Merge { left: 0, right: 1, height: 0.1, id: 3, size: 2 });
        assert_eq!(d.merges[1], Merge { left: 3, right: 2, height: 0.7, id: 4, size: 3 });
        assert_eq!(d.leaf_order(), vec![0, 1, 2]);
        assert!(d.is_monotone());
    }

    #[test]
    fn other_linkages() {
        let single = agglomerate(&three_node(), Linkage::Single).unwrap();
        assert_eq!(single.merges[1].height, 0.6);
        let complete = agglomerate(&three_node(), Linkage::Complete).unwrap();
        assert_eq!(complete.merges[1].height, 0.8);
    }

    #[test]
    fn equal_distances_merge_in_index_order() {
        let n = 5;
        let d = SquareMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { 0.5 });
        let dend = agglomerate(&SymmetricMatrix::from_matrix(d).unwrap(), Linkage::Average).unwrap();
        let pairs: Vec<_> = dend.merges.iter().map(|m| (m.left, m.right)).collect();
        assert_eq!(pairs, vec![(0, 1), (5, 2), (6, 3), (7, 4)]);
        assert_eq!(dend.leaf_order(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn newick_branch_lengths() {
        let d = agglomerate(&three_node(), Linkage::Average).unwrap();
        let labels = ["A", "B", "C"].map(String::from);
        let nwk = d.to_newick(&labels).unwrap();
        assert_eq!(nwk, format!("((A:0.1,B:0.1):{},C:0.7);", 0.7 - 0.1));
        assert!(d.to_newick(&labels[..2]).is_err());
    }

    #[test]
    fn rejects_single_item() {
        let one = SymmetricMatrix::from_matrix(SquareMatrix::zeros(1)).unwrap();
        assert_eq!(agglomerate(&one, Linkage::Average).unwrap_err(), ClusterError::TooFewItems(1));
    }
}
