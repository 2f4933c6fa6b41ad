//! Shuffled surrogate networks and the null distribution of the Perron root.
//!
//! Both shuffles keep the multiset of positive weights bit-for-bit. A
//! link-shuffle places those weights on uniformly chosen distinct ordered
//! pairs; a weight-permute keeps the edge positions and permutes weights
//! among them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Period;
use crate::matrix::SquareMatrix;
use crate::network::{symmetrize, NetworkSnapshot};
use crate::seed::sub_seed;
use crate::spectral::{perron_eigenpair, PowerIterationOptions, SpectralError, SpectrumMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NullModelError {
    #[error("snapshot has no edges to shuffle")]
    NoEdges,
    #[error("{edges} edges do not fit in {slots} off-diagonal slots")]
    TooManyEdges { edges: usize, slots: usize },
    #[error("unknown shuffle mode {0:?}")]
    InvalidMode(String),
    #[error("n_samples must be at least 1")]
    NoSamples,
    #[error("replica {replica}: {source}")]
    Replica {
        replica: usize,
        #[source]
        source: SpectralError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShuffleMode {
    /// Weights moved to random distinct off-diagonal positions.
    #[default]
    LinkShuffle,
    /// Weights permuted among the existing edges; topology kept.
    WeightPermute,
}

impl std::fmt::Display for ShuffleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ShuffleMode::LinkShuffle => "link-shuffle",
            ShuffleMode::WeightPermute => "weight-permute",
        })
    }
}

impl std::str::FromStr for ShuffleMode {
    type Err = NullModelError;

    fn from_str(s: &str) -> Result<Self, NullModelError> {
        match s {
            "link-shuffle" => Ok(Self::LinkShuffle),
            "weight-permute" => Ok(Self::WeightPermute),
            other => Err(NullModelError::InvalidMode(other.to_string())),
        }
    }
}

/// Maps `k` in `0..n(n-1)` to the k-th off-diagonal cell in row-major order.
fn off_diagonal_cell(k: usize, n: usize) -> (usize, usize) {
    let i = k / (n - 1);
    let r = k % (n - 1);
    (i, if r < i { r } else { r + 1 })
}

/// Randomizes a snapshot. Same `(snapshot, seed, mode)` gives the same result.
pub fn shuffle_snapshot(snapshot: &NetworkSnapshot, seed: u64, mode: ShuffleMode) -> Result<NetworkSnapshot, NullModelError> {
    let w = snapshot.weights();
    let n = w.dim();
    let edges: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| w[(i, j)] > 0.0).collect();
    let slots = n * (n - 1);
    if edges.is_empty() {
        return Err(NullModelError::NoEdges);
    }
    if edges.len() > slots {
        return Err(NullModelError::TooManyEdges { edges: edges.len(), slots });
    }
    let weights: Vec<f64> = edges.iter().map(|&c| w[c]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SquareMatrix::zeros(n);

    match mode {
        ShuffleMode::LinkShuffle => {
            // Partial Fisher-Yates: the first E entries become a uniform
            // random E-subset of the slot space, in random order.
            let mut index: Vec<usize> = (0..slots).collect();
            for k in 0..edges.len() {
                let pick = rng.random_range(k..slots);
                index.swap(k, pick);
            }
            for (&slot, &x) in index.iter().zip(&weights) {
                out[off_diagonal_cell(slot, n)] = x;
            }
        }
        ShuffleMode::WeightPermute => {
            let mut permuted = weights;
            permuted.shuffle(&mut rng);
            for (&cell, x) in edges.iter().zip(permuted) {
                out[cell] = x;
            }
        }
    }
    Ok(snapshot.with_weights(out).expect("shuffle keeps snapshot invariants"))
}

/// Summary of λ_max over an ensemble of shuffled replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullEnsembleStats {
    pub n_samples: usize,
    /// In replica order.
    pub lambda_values: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub q01: f64,
    pub q50: f64,
    pub q99: f64,
    pub seed: u64,
    pub mode: ShuffleMode,
}

/// Linear interpolation between order statistics (the "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl NullEnsembleStats {
    /// Statistics are computed from the sorted values, so replica order does
    /// not affect them.
    pub fn from_values(lambda_values: Vec<f64>, seed: u64, mode: ShuffleMode) -> Self {
        let mut sorted = lambda_values.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        NullEnsembleStats {
            n_samples: sorted.len(),
            q01: quantile_sorted(&sorted, 0.01),
            q50: quantile_sorted(&sorted, 0.50),
            q99: quantile_sorted(&sorted, 0.99),
            mean,
            std: var.sqrt(),
            lambda_values,
            seed,
            mode,
        }
    }

    pub fn report(&self, period: Period, with_values: bool) -> NullEnsembleReport {
        NullEnsembleReport {
            period,
            mode: self.mode,
            n_samples: self.n_samples,
            seed: self.seed,
            mean: self.mean,
            std: self.std,
            q01: self.q01,
            q50: self.q50,
            q99: self.q99,
            lambda_values: with_values.then(|| self.lambda_values.clone()),
        }
    }
}

/// JSON export shape of a null ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullEnsembleReport {
    pub period: Period,
    pub mode: ShuffleMode,
    pub n_samples: usize,
    pub seed: u64,
    pub mean: f64,
    pub std: f64,
    pub q01: f64,
    pub q50: f64,
    pub q99: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda_values: Option<Vec<f64>>,
}

/// λ_max of one replica, taken from the matrix `spectrum` selects.
pub fn replica_lambda(snapshot: &NetworkSnapshot, spectrum: SpectrumMode) -> Result<f64, SpectralError> {
    let opts = PowerIterationOptions::default();
    match spectrum {
        SpectrumMode::DirectedPerron => perron_eigenpair(snapshot.weights(), &opts),
        SpectrumMode::Symmetrized => perron_eigenpair(symmetrize(snapshot).values(), &opts),
    }
    .map(|p| p.lambda)
}

/// Runs `n_samples` shuffles; replica k uses seed `sub_seed(seed, k)`.
pub fn null_ensemble(
    snapshot: &NetworkSnapshot,
    n_samples: usize,
    seed: u64,
    mode: ShuffleMode,
) -> Result<NullEnsembleStats, NullModelError> {
    null_ensemble_with(snapshot, n_samples, seed, mode, SpectrumMode::DirectedPerron)
}

/// [`null_ensemble`] with λ_max taken from the directed or symmetrized replica.
pub fn null_ensemble_with(
    snapshot: &NetworkSnapshot,
    n_samples: usize,
    seed: u64,
    mode: ShuffleMode,
    spectrum: SpectrumMode,
) -> Result<NullEnsembleStats, NullModelError> {
    if n_samples == 0 {
        return Err(NullModelError::NoSamples);
    }
    let values = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let replica = shuffle_snapshot(snapshot, sub_seed(seed, k as u64), mode)?;
            replica_lambda(&replica, spectrum).map_err(|source| NullModelError::Replica { replica: k, source })
        })
        .collect::<Result<Vec<f64>, NullModelError>>()?;
    Ok(NullEnsembleStats::from_values(values, seed, mode))
}
