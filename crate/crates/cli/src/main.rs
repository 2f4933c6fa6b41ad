//! `flowrmt` command-line interface.
//!
//! Exit codes: 0 success, 1 data error, 2 numerical non-convergence,
//! 3 IO or configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flowrmt::cluster::{ClusterError, Linkage};
use flowrmt::ingest::{
    convert_bis_lbs, generate_synthetic_series, parse_flow_csv, BisMapping, IngestError, SyntheticParams, Table,
};
use flowrmt::network::{build_snapshot, symmetrize, NetworkError, VolumeShareMode};
use flowrmt::nullmodel::{NullModelError, ShuffleMode};
use flowrmt::pipeline::{
    analyze_period, export, participation_csv, period_dendrogram, resolve_config, run_timeseries, timeseries_csv,
    AnalysisConfig, ConfigOverrides, ExportFormats, PipelineError, TimeSeriesResult,
};
use flowrmt::spectral::{full_spectrum, SpectralError};
use flowrmt::{FlowRecordSet, Period};

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn data(e: impl std::fmt::Display) -> Self {
        Failure { code: 1, message: e.to_string() }
    }

    fn io(e: impl std::fmt::Display) -> Self {
        Failure { code: 3, message: e.to_string() }
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::BadMapping(_) | IngestError::AbsentColumn(_) | IngestError::BadSynthetic(_) => Failure::io(e),
            _ => Failure::data(e),
        }
    }
}

impl From<NetworkError> for Failure {
    fn from(e: NetworkError) -> Self {
        Failure::data(e)
    }
}

impl From<ClusterError> for Failure {
    fn from(e: ClusterError) -> Self {
        Failure::data(e)
    }
}

impl From<SpectralError> for Failure {
    fn from(e: SpectralError) -> Self {
        let code = if matches!(e, SpectralError::NoConvergence { .. }) { 2 } else { 1 };
        Failure { code, message: e.to_string() }
    }
}

impl From<NullModelError> for Failure {
    fn from(e: NullModelError) -> Self {
        match &e {
            NullModelError::Replica { source: SpectralError::NoConvergence { .. }, .. } => Failure { code: 2, message: e.to_string() },
            NullModelError::InvalidMode(_) => Failure::io(e),
            _ => Failure::data(e),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure { code: e.exit_code() as u8, message: e.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "flowrmt", version, about = "Random matrix analysis of bilateral flow networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze one period.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        period: Period,
        /// Include every replica's λ_max in the JSON null summary.
        #[arg(long)]
        with_lambda_values: bool,
    },
    /// Analyze every period and export the time series.
    Timeseries {
        #[command(flatten)]
        common: Common,
    },
    /// Emit one shuffled surrogate of a period's network.
    Shuffle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        period: Period,
    },
    /// Export a period's network as JSON or DOT.
    Snapshot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        period: Period,
    },
    /// Cluster a period's entities and print the tree and leaf order.
    Dendrogram {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        period: Period,
    },
    /// Generate a synthetic core-periphery dataset.
    Synth(SynthArgs),
    /// Convert a BIS locational banking statistics CSV into a flow CSV.
    ConvertBis {
        /// Source CSV with a header row.
        #[arg(long)]
        input: PathBuf,
        /// Column mapping: JSON object or key=value lines.
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Dot,
    Newick,
}

#[derive(Args)]
struct Common {
    /// Flow CSV (period,reporter,counterparty,amount).
    #[arg(long)]
    input: PathBuf,
    /// JSON configuration file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    null_samples: Option<usize>,
    #[arg(long, value_parser = parse_from_str::<ShuffleMode>)]
    null_mode: Option<ShuffleMode>,
    #[arg(long, value_parser = parse_from_str::<flowrmt::spectral::SpectrumMode>)]
    spectrum_mode: Option<flowrmt::spectral::SpectrumMode>,
    /// both | out | in
    #[arg(long, value_parser = parse_from_str::<VolumeShareMode>)]
    volume_share: Option<VolumeShareMode>,
    /// average | single | complete
    #[arg(long, value_parser = parse_from_str::<Linkage>)]
    linkage: Option<Linkage>,
    /// Also report λ_max divided by total volume.
    #[arg(long)]
    normalize_volume: bool,
    /// Output directory; results go to stdout when absent (except `timeseries`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker thread cap.
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_from_str<T>(s: &str) -> Result<T, String>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 6)]
    n_core: usize,
    #[arg(long, default_value_t = 25)]
    n_periphery: usize,
    #[arg(long, default_value_t = 100.0)]
    core_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    periphery_scale: f64,
    #[arg(long, default_value_t = 0.1)]
    link_prob_pp: f64,
    /// Periphery link probability in the last period (linear ramp).
    #[arg(long)]
    link_prob_pp_end: Option<f64>,
    #[arg(long, default_value_t = 1)]
    periods: usize,
    #[arg(long, default_value = "2000-Q1")]
    start: Period,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory; writes flows.csv there. Stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<AnalysisConfig, Failure> {
        let file = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Failure::io(format!("{}: {e}", p.display())))?;
                Some(ConfigOverrides::from_json(&text).map_err(Failure::io)?)
            }
            None => None,
        };
        let cli = ConfigOverrides {
            seed: self.seed,
            null_samples: self.null_samples,
            null_mode: self.null_mode,
            spectrum_mode: self.spectrum_mode,
            volume_share_mode: self.volume_share,
            normalize_by_volume: self.normalize_volume.then_some(true),
            linkage: self.linkage,
        };
        Ok(resolve_config(file.as_ref(), &cli))
    }

    fn records(&self) -> Result<FlowRecordSet, Failure> {
        let text = fs::read_to_string(&self.input).map_err(|e| Failure::io(format!("{}: {e}", self.input.display())))?;
        parse_flow_csv(&text).map_err(|e| Failure::data(format!("{}: {e}", self.input.display())))
    }

    fn format_or(&self, default: Format, allowed: &[Format]) -> Result<Format, Failure> {
        let f = self.format.unwrap_or(default);
        if allowed.contains(&f) {
            Ok(f)
        } else {
            Err(Failure::io(format!("format {:?} not supported by this command", f.to_possible_value().unwrap().get_name())))
        }
    }
}

/// Writes `body` to `dir/name`, or to stdout when no directory was given.
fn emit(out: Option<&Path>, name: &str, body: &str) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
            log::info!("wrote {}", path.display());
            Ok(())
        }
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Analyze { common, period, with_lambda_values } => {
            let config = common.config()?;
            let records = common.records()?;
            let format = common.format_or(Format::Json, &[Format::Json, Format::Csv])?;
            let result = analyze_period(&records, period, &config)?;
            match format {
                Format::Csv => {
                    let ts = TimeSeriesResult {
                        fingerprint: flowrmt::pipeline::fingerprint(&records),
                        config,
                        entities: records.entities().to_vec(),
                        periods: vec![result],
                        skipped: vec![],
                        failures: vec![],
                        partial: false,
                    };
                    emit(common.out.as_deref(), &format!("{period}.csv"), &timeseries_csv(&ts))?;
                    emit(
                        common.out.as_deref(),
                        &format!("{period}-participation.csv"),
                        &participation_csv(&ts.entities, &ts.periods[0]),
                    )?;
                }
                _ => {
                    let snapshot = build_snapshot(&records, period)?;
                    let spectrum = full_spectrum(&symmetrize(&snapshot)).report(period);
                    let body = serde_json::json!({
                        "result": result,
                        "symmetrized_spectrum": spectrum,
                        "null": result.lambda_max_shuffled.report(period, with_lambda_values),
                        "config": config,
                    });
                    emit(common.out.as_deref(), &format!("{period}.json"), &to_json(&body))?;
                }
            }
        }
        Command::Timeseries { common } => {
            let config = common.config()?;
            let records = common.records()?;
            let formats = match common.format {
                None => ExportFormats::default(),
                Some(Format::Csv) => ExportFormats { csv: true, json: false },
                Some(Format::Json) => ExportFormats { csv: false, json: true },
                Some(_) => return Err(Failure::io("timeseries supports --format csv or json")),
            };
            let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("flowrmt-out"));
            let result = run_timeseries(&records, &config)?;
            if result.partial {
                log::warn!("{} of {} periods failed", result.failures.len(), records.periods().len());
            }
            let written = export(&result, &dir, formats)?;
            eprintln!("{} periods analyzed, {} files written to {}", result.periods.len(), written.len(), dir.display());
        }
        Command::Shuffle { common, period } => {
            let config = common.config()?;
            let records = common.records()?;
            let format = common.format_or(Format::Json, &[Format::Json, Format::Dot])?;
            let snapshot = build_snapshot(&records, period)?;
            let surrogate = flowrmt::nullmodel::shuffle_snapshot(&snapshot, config.seed, config.null_mode)?;
            write_snapshot(&surrogate, format, common.out.as_deref(), &format!("{period}-shuffled"))?;
        }
        Command::Snapshot { common, period } => {
            let records = common.records()?;
            let format = common.format_or(Format::Json, &[Format::Json, Format::Dot])?;
            let snapshot = build_snapshot(&records, period)?;
            write_snapshot(&snapshot, format, common.out.as_deref(), &period.to_string())?;
        }
        Command::Dendrogram { common, period } => {
            let config = common.config()?;
            let records = common.records()?;
            let format = common.format_or(Format::Json, &[Format::Json, Format::Newick])?;
            let tree = period_dendrogram(&records, period, config.linkage)?;
            match format {
                Format::Newick => emit(common.out.as_deref(), &format!("{period}.nwk"), &format!("{}\n", tree.newick))?,
                _ => emit(common.out.as_deref(), &format!("{period}-dendrogram.json"), &to_json(&tree))?,
            }
        }
        Command::Synth(args) => {
            let params = SyntheticParams {
                n_core: args.n_core,
                n_periphery: args.n_periphery,
                core_weight_scale: args.core_scale,
                periphery_weight_scale: args.periphery_scale,
                link_prob_pp: args.link_prob_pp,
                seed: args.seed,
            };
            let end = args.link_prob_pp_end.unwrap_or(args.link_prob_pp);
            let set = generate_synthetic_series(&params, args.start, args.periods, end)?;
            emit(args.out.as_deref(), "flows.csv", &set.to_csv())?;
        }
        Command::ConvertBis { input, mapping, out } => {
            let mapping_text =
                fs::read_to_string(&mapping).map_err(|e| Failure::io(format!("{}: {e}", mapping.display())))?;
            let mapping = BisMapping::parse(&mapping_text)?;
            let file = fs::File::open(&input).map_err(|e| Failure::io(format!("{}: {e}", input.display())))?;
            let table = Table::from_csv_reader(file)?;
            let report = convert_bis_lbs(&table, &mapping)?;
            eprintln!(
                "{} rows read, {} filtered out, {} dropped as missing, {} self pairs dropped, {} duplicates merged, {} records",
                report.rows_read,
                report.rows_filtered_out,
                report.dropped_missing,
                report.dropped_self_pairs,
                report.merged_duplicates,
                report.records.len()
            );
            emit(out.as_deref(), "flows.csv", &report.records.to_csv())?;
        }
    }
    Ok(())
}

fn write_snapshot(
    snapshot: &flowrmt::NetworkSnapshot,
    format: Format,
    out: Option<&Path>,
    stem: &str,
) -> Result<(), Failure> {
    match format {
        Format::Dot => emit(out, &format!("{stem}.dot"), &snapshot.to_dot()),
        _ => emit(out, &format!("{stem}.json"), &to_json(snapshot)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    let workers = match &cli.command {
        Command::Analyze { common, .. }
        | Command::Timeseries { common }
        | Command::Shuffle { common, .. }
        | Command::Snapshot { common, .. }
        | Command::Dendrogram { common, .. } => common.workers,
        _ => None,
    };
    if let Some(n) = workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
