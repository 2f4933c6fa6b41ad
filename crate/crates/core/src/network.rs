//! Per-period weighted directed adjacency matrices.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{FlowRecordSet, Period};
use crate::matrix::SquareMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("period {0} not present in the record set")]
    UnknownPeriod(Period),
    #[error("a network needs at least 2 entities, found {0}")]
    TooFewEntities(usize),
    #[error("weight matrix is {found}x{found}, roster has {expected} entities")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("entity roster must be unique and sorted")]
    UnsortedEntities,
    #[error("entry ({row}, {col}) = {value} is negative or not finite")]
    BadWeight { row: usize, col: usize, value: f64 },
    #[error("diagonal entry {0} is nonzero")]
    NonzeroDiagonal(usize),
    #[error("total volume is zero")]
    ZeroVolume,
}

/// One period's lending matrix: entry (i, j) is the amount entity i lent to
/// entity j. Rows and columns follow `entities`, which is sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSnapshot")]
pub struct NetworkSnapshot {
    period: Period,
    entities: Vec<String>,
    weights: SquareMatrix,
}

#[derive(Deserialize)]
struct RawSnapshot {
    period: Period,
    entities: Vec<String>,
    weights: SquareMatrix,
}

impl TryFrom<RawSnapshot> for NetworkSnapshot {
    type Error = NetworkError;

    fn try_from(raw: RawSnapshot) -> Result<Self, NetworkError> {
        NetworkSnapshot::new(raw.period, raw.entities, raw.weights)
    }
}

impl NetworkSnapshot {
    pub fn new(period: Period, entities: Vec<String>, weights: SquareMatrix) -> Result<Self, NetworkError> {
        let n = entities.len();
        if n < 2 {
            return Err(NetworkError::TooFewEntities(n));
        }
        if weights.dim() != n {
            return Err(NetworkError::DimensionMismatch { expected: n, found: weights.dim() });
        }
        if entities.windows(2).any(|w| w[0] >= w[1]) {
            return Err(NetworkError::UnsortedEntities);
        }
        for i in 0..n {
            for j in 0..n {
                let value = weights[(i, j)];
                if !(value.is_finite() && value >= 0.0) {
                    return Err(NetworkError::BadWeight { row: i, col: j, value });
                }
            }
            if weights[(i, i)] != 0.0 {
                return Err(NetworkError::NonzeroDiagonal(i));
            }
        }
        Ok(NetworkSnapshot { period, entities, weights })
    }

    pub fn period(&self) -> Period {
        self.period
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn weights(&self) -> &SquareMatrix {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Number of positive off-diagonal entries.
    pub fn edge_count(&self) -> usize {
        self.weights.as_slice().iter().filter(|&&w| w > 0.0).count()
    }

    pub fn is_zero(&self) -> bool {
        self.edge_count() == 0
    }

    /// Same roster and period, new weights (invariants rechecked).
    pub fn with_weights(&self, weights: SquareMatrix) -> Result<Self, NetworkError> {
        NetworkSnapshot::new(self.period, self.entities.clone(), weights)
    }

    /// Graphviz digraph with one `weight` attribute per positive entry.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", self.period);
        for e in &self.entities {
            let _ = writeln!(out, "  \"{e}\";");
        }
        let n = self.len();
        for i in 0..n {
            for j in 0..n {
                let w = self.weights[(i, j)];
                if w > 0.0 {
                    let _ = writeln!(out, "  \"{}\" -> \"{}\" [weight={}];", self.entities[i], self.entities[j], w);
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Real symmetric matrix over an entity roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricMatrix {
    entities: Vec<String>,
    values: SquareMatrix,
}

impl SymmetricMatrix {
    /// Returns `None` if `values` is not exactly symmetric or the sizes differ.
    pub fn new(entities: Vec<String>, values: SquareMatrix) -> Option<Self> {
        (entities.len() == values.dim() && values.is_symmetric()).then_some(SymmetricMatrix { entities, values })
    }

    /// Unlabelled matrix, entities named by index.
    pub fn from_matrix(values: SquareMatrix) -> Option<Self> {
        let entities = (0..values.dim()).map(|i| i.to_string()).collect();
        Self::new(entities, values)
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn values(&self) -> &SquareMatrix {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }
}

/// Sums the period's amounts into a matrix over the record set's full roster,
/// so snapshots of different periods share one index.
pub fn build_snapshot(records: &FlowRecordSet, period: Period) -> Result<NetworkSnapshot, NetworkError> {
    if records.period_index(period).is_none() {
        return Err(NetworkError::UnknownPeriod(period));
    }
    let entities = records.entities().to_vec();
    let n = entities.len();
    if n < 2 {
        return Err(NetworkError::TooFewEntities(n));
    }
    let index: HashMap<&str, usize> = entities.iter().enumerate().map(|(i, e)| (e.as_str(), i)).collect();

    // Accumulate per cell in a fixed (sorted) order so the sum does not depend
    // on record order.
    let mut cells: Vec<(usize, usize, f64)> = records
        .records()
        .iter()
        .filter(|r| r.period == period)
        .map(|r| (index[r.reporter.as_str()], index[r.counterparty.as_str()], r.amount))
        .collect();
    cells.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));

    let mut weights = SquareMatrix::zeros(n);
    for (i, j, a) in cells {
        weights[(i, j)] += a;
    }
    NetworkSnapshot::new(period, entities, weights)
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(snapshot: &NetworkSnapshot) -> SymmetricMatrix {
    let w = snapshot.weights();
    let values = SquareMatrix::from_fn(w.dim(), |i, j| 0.5 * w[(i, j)] + 0.5 * w[(j, i)]);
    SymmetricMatrix { entities: snapshot.entities.clone(), values }
}

pub fn total_volume(snapshot: &NetworkSnapshot) -> f64 {
    snapshot.weights.sum()
}

/// Positive off-diagonal entries over N(N-1).
pub fn density(snapshot: &NetworkSnapshot) -> f64 {
    let n = snapshot.len() as f64;
    snapshot.edge_count() as f64 / (n * (n - 1.0))
}

/// Which side of an entity's activity counts toward its volume share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VolumeShareMode {
    /// (lent + borrowed) / 2
    #[default]
    Both,
    /// Lent only (row sums).
    Out,
    /// Borrowed only (column sums).
    In,
}

impl std::str::FromStr for VolumeShareMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "both" => Ok(Self::Both),
            "out" => Ok(Self::Out),
            "in" => Ok(Self::In),
            other => Err(format!("unknown volume share mode {other:?}")),
        }
    }
}

/// Each entity's share of total volume, in percent.
pub fn volume_share(snapshot: &NetworkSnapshot, mode: VolumeShareMode) -> Result<Vec<f64>, NetworkError> {
    let total = total_volume(snapshot);
    if total <= 0.0 {
        return Err(NetworkError::ZeroVolume);
    }
    let w = snapshot.weights();
    let n = w.dim();
    let shares = (0..n)
        .map(|k| {
            let out: f64 = w.row(k).iter().sum();
            let inn: f64 = (0..n).map(|i| w[(i, k)]).sum();
            let part = match mode {
                VolumeShareMode::Both => (out + inn) / 2.0,
                VolumeShareMode::Out => out,
                VolumeShareMode::In => inn,
            };
            part / total * 100.0
        })
        .collect();
    Ok(shares)
}
