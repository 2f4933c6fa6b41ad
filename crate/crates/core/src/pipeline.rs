//! Per-period analysis over a whole dataset, and the table exports behind it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cluster::{agglomerate, distance_matrix, ClusterError, Dendrogram, Linkage, Merge};
use crate::ingest::{FlowRecordSet, Period};
use crate::network::{
    build_snapshot, density, symmetrize, total_volume, volume_share, NetworkError, NetworkSnapshot, VolumeShareMode,
};
use crate::nullmodel::{null_ensemble_with, NullEnsembleStats, NullModelError, ShuffleMode};
use crate::seed::sub_seed;
use crate::spectral::{
    full_spectrum, ipr, mean_ipr, participation_percent, perron_eigenpair, LeadingEigenpair, PowerIterationOptions,
    SpectralError, SpectrumMode,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    NullModel(#[from] NullModelError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("all weights are zero")]
    EmptyNetwork,
}

impl AnalysisError {
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            AnalysisError::Spectral(SpectralError::NoConvergence { .. })
                | AnalysisError::NullModel(NullModelError::Replica { source: SpectralError::NoConvergence { .. }, .. })
        )
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("period {period}: {source}")]
    Period {
        period: Period,
        #[source]
        source: AnalysisError,
    },
    #[error("record set has no periods")]
    NoPeriods,
    #[error("every period failed; first failure: {}", .0.first().map(|f| f.to_string()).unwrap_or_default())]
    AllPeriodsFailed(Vec<PeriodIssue>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration: {0}")]
    Config(String),
}

impl PipelineError {
    fn period(period: Period) -> impl FnOnce(AnalysisError) -> PipelineError {
        move |source| PipelineError::Period { period, source }
    }

    /// 1 data error, 2 numerical non-convergence, 3 IO or configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Period { source, .. } if source.is_numerical() => 2,
            PipelineError::AllPeriodsFailed(f) if !f.is_empty() && f.iter().all(|i| i.numerical) => 2,
            PipelineError::Io { .. } | PipelineError::Config(_) => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Master seed; each period's null ensemble uses `sub_seed(seed, period index)`.
    pub seed: u64,
    pub null_samples: usize,
    pub null_mode: ShuffleMode,
    pub spectrum_mode: SpectrumMode,
    pub volume_share_mode: VolumeShareMode,
    /// Also report λ_max / total volume.
    pub normalize_by_volume: bool,
    pub linkage: Linkage,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            seed: 1,
            null_samples: 100,
            null_mode: ShuffleMode::LinkShuffle,
            spectrum_mode: SpectrumMode::DirectedPerron,
            volume_share_mode: VolumeShareMode::Both,
            normalize_by_volume: false,
            linkage: Linkage::Average,
        }
    }
}

/// Any subset of [`AnalysisConfig`]; used for the config file and for
/// command-line overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub seed: Option<u64>,
    pub null_samples: Option<usize>,
    pub null_mode: Option<ShuffleMode>,
    pub spectrum_mode: Option<SpectrumMode>,
    pub volume_share_mode: Option<VolumeShareMode>,
    pub normalize_by_volume: Option<bool>,
    pub linkage: Option<Linkage>,
}

impl ConfigOverrides {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn apply(&self, base: AnalysisConfig) -> AnalysisConfig {
        AnalysisConfig {
            seed: self.seed.unwrap_or(base.seed),
            null_samples: self.null_samples.unwrap_or(base.null_samples),
            null_mode: self.null_mode.unwrap_or(base.null_mode),
            spectrum_mode: self.spectrum_mode.unwrap_or(base.spectrum_mode),
            volume_share_mode: self.volume_share_mode.unwrap_or(base.volume_share_mode),
            normalize_by_volume: self.normalize_by_volume.unwrap_or(base.normalize_by_volume),
            linkage: self.linkage.unwrap_or(base.linkage),
        }
    }
}

/// Defaults, then the config file, then command-line values.
pub fn resolve_config(file: Option<&ConfigOverrides>, cli: &ConfigOverrides) -> AnalysisConfig {
    let base = AnalysisConfig::default();
    let base = match file {
        Some(f) => f.apply(base),
        None => base,
    };
    cli.apply(base)
}

// ---------------------------------------------------------------------------
// Per-period analysis
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodResult {
    pub period: Period,
    pub lambda_max: f64,
    pub lambda_max_shuffled: NullEnsembleStats,
    pub mean_ipr: f64,
    pub ipr_lambda_max: f64,
    pub total_volume: f64,
    pub density: f64,
    pub market_mode: Vec<f64>,
    /// Percent per entity, from the market mode.
    pub participation: Vec<f64>,
    /// Percent per entity.
    pub volume_share: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_max_per_volume: Option<f64>,
}

impl PeriodResult {
    /// λ_max minus the null ensemble mean.
    pub fn gap(&self) -> f64 {
        self.lambda_max - self.lambda_max_shuffled.mean
    }
}

/// Leading eigenpair of the matrix `mode` selects.
pub fn leading_for_mode(snapshot: &NetworkSnapshot, mode: SpectrumMode) -> Result<LeadingEigenpair, SpectralError> {
    let opts = PowerIterationOptions::default();
    match mode {
        SpectrumMode::DirectedPerron => perron_eigenpair(snapshot.weights(), &opts),
        SpectrumMode::Symmetrized => perron_eigenpair(symmetrize(snapshot).values(), &opts),
    }
}

fn analyze_snapshot(snapshot: &NetworkSnapshot, null_seed: u64, config: &AnalysisConfig) -> Result<PeriodResult, AnalysisError> {
    if snapshot.is_zero() {
        return Err(AnalysisError::EmptyNetwork);
    }
    let lead = leading_for_mode(snapshot, config.spectrum_mode)?;
    let spectrum = full_spectrum(&symmetrize(snapshot));
    let null = null_ensemble_with(snapshot, config.null_samples, null_seed, config.null_mode, config.spectrum_mode)?;
    let volume = total_volume(snapshot);
    Ok(PeriodResult {
        period: snapshot.period(),
        lambda_max: lead.lambda,
        lambda_max_shuffled: null,
        mean_ipr: mean_ipr(&spectrum)?,
        ipr_lambda_max: ipr(&lead.vector)?,
        total_volume: volume,
        density: density(snapshot),
        participation: participation_percent(&lead.vector),
        volume_share: volume_share(snapshot, config.volume_share_mode)?,
        lambda_max_per_volume: config.normalize_by_volume.then(|| lead.lambda / volume),
        market_mode: lead.vector,
    })
}

/// Full analysis of one period. The null ensemble is seeded with
/// `sub_seed(config.seed, i)` where `i` is the period's chronological index,
/// so the result matches the same period inside [`run_timeseries`].
pub fn analyze_period(records: &FlowRecordSet, period: Period, config: &AnalysisConfig) -> Result<PeriodResult, PipelineError> {
    let index = records
        .period_index(period)
        .ok_or(PipelineError::Period { period, source: NetworkError::UnknownPeriod(period).into() })?;
    let snapshot = build_snapshot(records, period).map_err(|e| PipelineError::period(period)(e.into()))?;
    analyze_snapshot(&snapshot, sub_seed(config.seed, index as u64), config).map_err(PipelineError::period(period))
}

// ---------------------------------------------------------------------------
// Time series
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodIssue {
    pub period: Period,
    pub reason: String,
    #[serde(default)]
    pub numerical: bool,
}

impl std::fmt::Display for PeriodIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.period, self.reason)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesResult {
    /// SHA-256 of the dataset in canonical flow-CSV form.
    pub fingerprint: String,
    pub config: AnalysisConfig,
    pub entities: Vec<String>,
    /// Chronological.
    pub periods: Vec<PeriodResult>,
    /// All-zero periods, left out on purpose.
    pub skipped: Vec<PeriodIssue>,
    pub failures: Vec<PeriodIssue>,
    /// Some periods failed.
    pub partial: bool,
}

pub fn fingerprint(records: &FlowRecordSet) -> String {
    hex::encode(Sha256::digest(records.to_csv().as_bytes()))
}

/// Analyzes every period. All-zero periods are skipped with a warning and
/// other failures are collected; the run only fails if no period succeeds.
pub fn run_timeseries(records: &FlowRecordSet, config: &AnalysisConfig) -> Result<TimeSeriesResult, PipelineError> {
    if records.periods().is_empty() {
        return Err(PipelineError::NoPeriods);
    }
    let outcomes: Vec<(Period, Result<PeriodResult, AnalysisError>)> = records
        .periods()
        .par_iter()
        .enumerate()
        .map(|(i, &period)| {
            let res = build_snapshot(records, period)
                .map_err(AnalysisError::from)
                .and_then(|s| analyze_snapshot(&s, sub_seed(config.seed, i as u64), config));
            (period, res)
        })
        .collect();

    let mut periods = Vec::new();
    let mut skipped = Vec::new();
    let mut failures = Vec::new();
    for (period, res) in outcomes {
        match res {
            Ok(r) => periods.push(r),
            Err(AnalysisError::EmptyNetwork) => {
                log::warn!("skipping {period}: all weights are zero");
                skipped.push(PeriodIssue { period, reason: AnalysisError::EmptyNetwork.to_string(), numerical: false });
            }
            Err(e) => {
                log::error!("period {period} failed: {e}");
                failures.push(PeriodIssue { period, reason: e.to_string(), numerical: e.is_numerical() });
            }
        }
    }
    if periods.is_empty() {
        let mut all = failures;
        all.extend(skipped);
        all.sort_by_key(|i| i.period);
        return Err(PipelineError::AllPeriodsFailed(all));
    }
    Ok(TimeSeriesResult {
        fingerprint: fingerprint(records),
        config: config.clone(),
        entities: records.entities().to_vec(),
        partial: !failures.is_empty(),
        periods,
        skipped,
        failures,
    })
}

// ---------------------------------------------------------------------------
// Dendrograms
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodDendrogram {
    pub period: Period,
    pub linkage: Linkage,
    pub entities: Vec<String>,
    pub merges: Vec<Merge>,
    pub leaf_order: Vec<usize>,
    /// Entities in leaf order.
    pub ordered_entities: Vec<String>,
    pub newick: String,
}

pub fn period_dendrogram(records: &FlowRecordSet, period: Period, linkage: Linkage) -> Result<PeriodDendrogram, PipelineError> {
    let wrap = PipelineError::period;
    let snapshot = build_snapshot(records, period).map_err(|e| wrap(period)(e.into()))?;
    let sym = symmetrize(&snapshot);
    let dist = distance_matrix(&sym).map_err(|e| wrap(period)(e.into()))?;
    let dend: Dendrogram = agglomerate(&dist, linkage).map_err(|e| wrap(period)(e.into()))?;
    let order = dend.leaf_order();
    let entities = snapshot.entities().to_vec();
    Ok(PeriodDendrogram {
        period,
        linkage,
        newick: dend.to_newick(&entities).map_err(|e| wrap(period)(e.into()))?,
        ordered_entities: order.iter().map(|&i| entities[i].clone()).collect(),
        leaf_order: order,
        merges: dend.merges,
        entities,
    })
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

pub const TIMESERIES_CSV_HEADER: &str =
    "period,lambda_max,lambda_sh_mean,lambda_sh_q99,mean_ipr,ipr_lambda_max,total_volume,density,gap";

/// One row per period; a `lambda_max_per_volume` column is appended when
/// the run was configured to normalize by volume.
pub fn timeseries_csv(result: &TimeSeriesResult) -> String {
    let normalized = result.config.normalize_by_volume;
    let mut out = String::from(TIMESERIES_CSV_HEADER);
    if normalized {
        out.push_str(",lambda_max_per_volume");
    }
    out.push('\n');
    for p in &result.periods {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            p.period,
            p.lambda_max,
            p.lambda_max_shuffled.mean,
            p.lambda_max_shuffled.q99,
            p.mean_ipr,
            p.ipr_lambda_max,
            p.total_volume,
            p.density,
            p.gap()
        );
        if normalized {
            let _ = write!(out, ",{}", p.lambda_max_per_volume.unwrap_or(f64::NAN));
        }
        out.push('\n');
    }
    out
}

/// `entity,participation_pct,volume_share_pct` for one period.
pub fn participation_csv(entities: &[String], period: &PeriodResult) -> String {
    let mut out = String::from("entity,participation_pct,volume_share_pct\n");
    for ((e, p), v) in entities.iter().zip(&period.participation).zip(&period.volume_share) {
        let _ = writeln!(out, "{e},{p},{v}");
    }
    out
}

pub fn timeseries_json(result: &TimeSeriesResult) -> String {
    let mut s = serde_json::to_string_pretty(result).expect("result serializes");
    s.push('\n');
    s
}

pub fn read_timeseries_json(text: &str) -> Result<TimeSeriesResult, PipelineError> {
    serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExportFormats {
    pub csv: bool,
    pub json: bool,
}

impl Default for ExportFormats {
    fn default() -> Self {
        ExportFormats { csv: true, json: true }
    }
}

/// Writes `timeseries.csv`, `participation/<period>.csv` and
/// `timeseries.json` under `dir`. Returns the written paths.
pub fn export(result: &TimeSeriesResult, dir: &Path, formats: ExportFormats) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, body: &str| -> Result<(), PipelineError> {
        fs::write(&path, body).map_err(io_err(&path))?;
        written.push(path);
        Ok(())
    };
    if formats.csv {
        put(dir.join("timeseries.csv"), &timeseries_csv(result))?;
        let pdir = dir.join("participation");
        fs::create_dir_all(&pdir).map_err(io_err(&pdir))?;
        for p in &result.periods {
            put(pdir.join(format!("{}.csv", p.period)), &participation_csv(&result.entities, p))?;
        }
    }
    if formats.json {
        put(dir.join("timeseries.json"), &timeseries_json(result))?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_flow_csv;

    fn two_node() -> FlowRecordSet {
        parse_flow_csv("period,reporter,counterparty,amount\n2000-Q1,A,B,3\n2000-Q1,B,A,5").unwrap()
    }

    fn cfg(n: usize) -> AnalysisConfig {
        AnalysisConfig { null_samples: n, seed: 99, ..Default::default() }
    }

    #[test]
    fn two_node_closed_form() {
        let r = analyze_period(&two_node(), "2000-Q1".parse().unwrap(), &cfg(5)).unwrap();
        assert!((r.lambda_max - 15f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.total_volume, 8.0);
        assert_eq!(r.density, 1.0);
        assert_eq!(r.volume_share, vec![50.0, 50.0]);
        // Perron vector ∝ (√3, √5): IPR = 64 / (9 + 25) = 32/17.
        assert!((r.ipr_lambda_max - 32.0 / 17.0).abs() < 1e-10);
        assert!((r.participation[0] - 37.5).abs() < 1e-8);
        assert!(r.gap().abs() < 1e-12);
    }

    #[test]
    fn unknown_and_empty_periods() {
        let recs = parse_flow_csv("period,reporter,counterparty,amount\n2000-Q1,A,B,0\n2000-Q2,A,B,1\n2000-Q2,B,A,1").unwrap();
        let err = analyze_period(&recs, "1999-Q1".parse().unwrap(), &cfg(2)).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        let err = analyze_period(&recs, "2000-Q1".parse().unwrap(), &cfg(2)).unwrap_err();
        assert!(matches!(err, PipelineError::Period { source: AnalysisError::EmptyNetwork, .. }));

        let ts = run_timeseries(&recs, &cfg(2)).unwrap();
        assert_eq!(ts.periods.len(), 1);
        assert_eq!(ts.skipped.len(), 1);
        assert!(!ts.partial);
    }

    #[test]
    fn all_zero_dataset_fails() {
        let recs = parse_flow_csv("period,reporter,counterparty,amount\n2000-Q1,A,B,0").unwrap();
        assert!(matches!(run_timeseries(&recs, &cfg(2)), Err(PipelineError::AllPeriodsFailed(_))));
        assert!(matches!(run_timeseries(&FlowRecordSet::default(), &cfg(2)), Err(PipelineError::NoPeriods)));
    }

    #[test]
    fn config_precedence() {
        let file = ConfigOverrides::from_json(r#"{"seed": 5, "null_samples": 7, "null_mode": "weight-permute"}"#).unwrap();
        let cli = ConfigOverrides { seed: Some(6), ..Default::default() };
        let c = resolve_config(Some(&file), &cli);
        assert_eq!((c.seed, c.null_samples, c.null_mode), (6, 7, ShuffleMode::WeightPermute));
        assert_eq!(c.linkage, Linkage::Average);
        assert!(ConfigOverrides::from_json(r#"{"sede": 5}"#).is_err());
    }

    #[test]
    fn csv_has_one_row_per_period() {
        let ts = run_timeseries(&two_node(), &cfg(3)).unwrap();
        let csv = timeseries_csv(&ts);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], TIMESERIES_CSV_HEADER);
        assert!(lines[1].starts_with("2000-Q1,"));
    }

    #[test]
    fn normalized_column_is_optional() {
        let mut c = cfg(2);
        c.normalize_by_volume = true;
        let ts = run_timeseries(&two_node(), &c).unwrap();
        assert!(timeseries_csv(&ts).lines().next().unwrap().ends_with(",lambda_max_per_volume"));
        let v = ts.periods[0].lambda_max_per_volume.unwrap();
        assert!((v - 15f64.sqrt() / 8.0).abs() < 1e-12);
    }

    #[test]
    fn dendrogram_for_period() {
        let recs = parse_flow_csv("period,reporter,counterparty,amount\n2000-Q1,A,B,4\n2000-Q1,B,A,4\n2000-Q1,A,C,4").unwrap();
        let d = period_dendrogram(&recs, "2000-Q1".parse().unwrap(), Linkage::Average).unwrap();
        assert_eq!(d.leaf_order, vec![0, 1, 2]);
        assert_eq!(d.ordered_entities, vec!["A", "B", "C"]);
        assert!(d.newick.ends_with(';'));
    }
}
