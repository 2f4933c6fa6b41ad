//! Random matrix analysis of weighted, directed bilateral-flow networks.
//!
//! The usual flow is
//!
//! 1. load records with [`ingest::parse_flow_csv`] (or convert a BIS
//!    locational statistics extract with [`ingest::convert_bis_lbs`]),
//! 2. build a per-quarter lending matrix with [`network::build_snapshot`],
//! 3. take its Perron root and market mode ([`spectral::leading_eigenpair`])
//!    and the full spectrum of the symmetrized matrix
//!    ([`spectral::full_spectrum`]) for inverse participation ratios,
//! 4. compare λ_max against a shuffled null ensemble
//!    ([`nullmodel::null_ensemble`]),
//! 5. cluster entities by trading weight ([`cluster::agglomerate`]).
//!
//! [`pipeline::run_timeseries`] does all of this for every quarter.

pub mod cluster;
pub mod ingest;
pub mod matrix;
pub mod network;
pub mod nullmodel;
pub mod pipeline;
pub mod seed;
pub mod spectral;

pub use ingest::{FlowRecord, FlowRecordSet, Period};
pub use matrix::SquareMatrix;
pub use network::{NetworkSnapshot, SymmetricMatrix};
pub use pipeline::{AnalysisConfig, PeriodResult, TimeSeriesResult};
pub use spectral::SpectralSummary;
