//! Bilateral flow records: parsing, BIS-style conversion and synthetic data.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::seed::sub_seed;

/// Header expected on every flow CSV.
pub const FLOW_CSV_HEADER: &str = "period,reporter,counterparty,amount";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("row {row}: malformed period label {label:?} (expected YYYY-Qn)")]
    MalformedPeriod { row: usize, label: String },
    #[error("row {row}: amount {value:?} is not a nonnegative number")]
    BadAmount { row: usize, value: String },
    #[error("row {row}: reporter equals counterparty ({code})")]
    SelfLoop { row: usize, code: String },
    #[error("row {row}: expected 4 columns, found {found}")]
    MissingColumn { row: usize, found: usize },
    #[error("row {row}: empty entity code")]
    EmptyEntity { row: usize },
    #[error("bad header {found:?}, expected {FLOW_CSV_HEADER:?}")]
    BadHeader { found: String },
    #[error("mapping references absent column {0:?}")]
    AbsentColumn(String),
    #[error("invalid mapping: {0}")]
    BadMapping(String),
    #[error("no rows survive filtering")]
    NothingSelected,
    #[error("malformed source table: {0}")]
    Table(String),
    #[error("invalid synthetic parameters: {0}")]
    BadSynthetic(String),
}

/// Quarter label, `YYYY-Qn`. Orders chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Period {
    year: u16,
    quarter: u8,
}

impl Period {
    pub fn new(year: u16, quarter: u8) -> Option<Self> {
        (year <= 9999 && (1..=4).contains(&quarter)).then_some(Period { year, quarter })
    }

    pub fn year(&self) -> u16 {
        self.year
    }

    pub fn quarter(&self) -> u8 {
        self.quarter
    }

    /// The following quarter.
    pub fn next(&self) -> Period {
        if self.quarter == 4 {
            Period { year: self.year + 1, quarter: 1 }
        } else {
            Period { year: self.year, quarter: self.quarter + 1 }
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-Q{}", self.year, self.quarter)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsePeriodError(pub String);

impl fmt::Display for ParsePeriodError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "malformed period label {:?}", self.0)
    }
}

impl std::error::Error for ParsePeriodError {}

impl FromStr for Period {
    type Err = ParsePeriodError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let b = s.as_bytes();
        let ok = b.len() == 7
            && b[..4].iter().all(u8::is_ascii_digit)
            && b[4] == b'-'
            && b[5] == b'Q'
            && (b'1'..=b'4').contains(&b[6]);
        if !ok {
            return Err(ParsePeriodError(s.to_string()));
        }
        let year = s[..4].parse().map_err(|_| ParsePeriodError(s.to_string()))?;
        Ok(Period { year, quarter: b[6] - b'0' })
    }
}

impl Serialize for Period {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One bilateral claim: `reporter` lent `amount` to `counterparty` in `period`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub period: Period,
    pub reporter: String,
    pub counterparty: String,
    pub amount: f64,
}

/// Records in input order, plus the sorted period and entity rosters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FlowRecordSet {
    records: Vec<FlowRecord>,
    periods: Vec<Period>,
    entities: Vec<String>,
}

impl FlowRecordSet {
    /// Builds a set from already validated records.
    pub fn from_records(records: Vec<FlowRecord>) -> Self {
        let mut periods = BTreeSet::new();
        let mut entities = BTreeSet::new();
        for r in &records {
            periods.insert(r.period);
            entities.insert(r.reporter.clone());
            entities.insert(r.counterparty.clone());
        }
        FlowRecordSet {
            records,
            periods: periods.into_iter().collect(),
            entities: entities.into_iter().collect(),
        }
    }

    pub fn records(&self) -> &[FlowRecord] {
        &self.records
    }

    pub fn periods(&self) -> &[Period] {
        &self.periods
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn period_index(&self, period: Period) -> Option<usize> {
        self.periods.binary_search(&period).ok()
    }

    /// Serializes to the flow CSV format accepted by [`parse_flow_csv`].
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.records.len() + 1));
        out.push_str(FLOW_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!("{},{},{},{}\n", r.period, r.reporter, r.counterparty, r.amount));
        }
        out
    }

    /// Concatenates several sets, keeping record order.
    pub fn concat(sets: impl IntoIterator<Item = FlowRecordSet>) -> Self {
        let records = sets.into_iter().flat_map(|s| s.records).collect();
        FlowRecordSet::from_records(records)
    }
}

fn normalize_code(raw: &str) -> String {
    raw.trim().to_uppercase()
}

fn parse_amount(raw: &str) -> Option<f64> {
    let v: f64 = raw.trim().parse().ok()?;
    (v.is_finite() && v >= 0.0).then_some(v)
}

/// Parses the `period,reporter,counterparty,amount` CSV format.
///
/// Row numbers in errors are 1-based and count the header as row 1.
pub fn parse_flow_csv(text: &str) -> Result<FlowRecordSet, IngestError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    let header = lines.next().unwrap_or("");
    let header_cols: Vec<String> = header.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
    if header_cols.join(",") != FLOW_CSV_HEADER {
        return Err(IngestError::BadHeader { found: header.to_string() });
    }

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(IngestError::MissingColumn { row, found: cols.len() });
        }
        let period: Period = cols[0]
            .trim()
            .parse()
            .map_err(|_| IngestError::MalformedPeriod { row, label: cols[0].to_string() })?;
        let reporter = normalize_code(cols[1]);
        let counterparty = normalize_code(cols[2]);
        if reporter.is_empty() || counterparty.is_empty() {
            return Err(IngestError::EmptyEntity { row });
        }
        if reporter == counterparty {
            return Err(IngestError::SelfLoop { row, code: reporter });
        }
        let amount = parse_amount(cols[3])
            .ok_or_else(|| IngestError::BadAmount { row, value: cols[3].to_string() })?;
        records.push(FlowRecord { period, reporter, counterparty, amount });
    }
    Ok(FlowRecordSet::from_records(records))
}

// ---------------------------------------------------------------------------
// BIS locational statistics converter
// ---------------------------------------------------------------------------

/// Column names and row filters for [`convert_bis_lbs`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisMapping {
    pub period: String,
    pub reporter: String,
    pub counterparty: String,
    pub value: String,
    /// Only rows whose column equals the given value are kept.
    #[serde(default)]
    pub filters: BTreeMap<String, String>,
    /// Cell contents treated as suppressed, in addition to the empty cell.
    #[serde(default = "default_missing_markers")]
    pub missing_markers: Vec<String>,
}

fn default_missing_markers() -> Vec<String> {
    ["NaN", "NA", "N/A", "..", "-", "NULL"].iter().map(|s| s.to_string()).collect()
}

impl BisMapping {
    /// Parses a mapping from a JSON object or from `key=value` lines.
    ///
    /// In key=value form, filters are written `filter.COLUMN=VALUE` and extra
    /// missing-value markers as a comma list under `missing`.
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            return serde_json::from_str(trimmed).map_err(|e| IngestError::BadMapping(e.to_string()));
        }
        let mut kv = BTreeMap::new();
        let mut filters = BTreeMap::new();
        let mut missing = default_missing_markers();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| IngestError::BadMapping(format!("line {}: expected key=value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim().to_string());
            if let Some(col) = k.strip_prefix("filter.") {
                filters.insert(col.to_string(), v);
            } else if k == "missing" {
                missing = v.split(',').map(|s| s.trim().to_string()).collect();
            } else {
                kv.insert(k.to_string(), v);
            }
        }
        let mut take = |key: &str| {
            kv.remove(key).ok_or_else(|| IngestError::BadMapping(format!("missing key {key:?}")))
        };
        let mapping = BisMapping {
            period: take("period")?,
            reporter: take("reporter")?,
            counterparty: take("counterparty")?,
            value: take("value")?,
            filters,
            missing_markers: missing,
        };
        if let Some(extra) = kv.keys().next() {
            return Err(IngestError::BadMapping(format!("unknown key {extra:?}")));
        }
        Ok(mapping)
    }
}

/// A source table: header plus string cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Reads a quoted CSV file with a header row.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self, IngestError> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| IngestError::Table(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(|e| IngestError::Table(e.to_string()))?;
        Ok(Table { header, rows })
    }
}

/// Outcome of a BIS conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversionReport {
    pub records: FlowRecordSet,
    pub rows_read: usize,
    pub rows_filtered_out: usize,
    pub dropped_missing: usize,
    pub dropped_self_pairs: usize,
    /// Source rows folded into an earlier (period, reporter, counterparty).
    pub merged_duplicates: usize,
}

/// Accepts `YYYY-Qn`, `YYYYQn`, `YYYY-qn` and `YYYY Qn`.
fn parse_source_period(raw: &str) -> Option<Period> {
    let s: String = raw.trim().chars().filter(|c| !matches!(c, '-' | ' ')).collect();
    let s = s.to_ascii_uppercase();
    if s.len() != 6 || s.as_bytes()[4] != b'Q' {
        return None;
    }
    format!("{}-{}", &s[..4], &s[4..]).parse().ok()
}

/// Converts BIS locational banking statistics rows into flow records.
///
/// Rows failing a filter are skipped; rows with an empty or suppressed value
/// are dropped and counted. Duplicate (period, reporter, counterparty) keys
/// are summed.
pub fn convert_bis_lbs(table: &Table, mapping: &BisMapping) -> Result<ConversionReport, IngestError> {
    let col = |name: &str| {
        table
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::AbsentColumn(name.to_string()))
    };
    let period_col = col(&mapping.period)?;
    let reporter_col = col(&mapping.reporter)?;
    let counterparty_col = col(&mapping.counterparty)?;
    let value_col = col(&mapping.value)?;
    let filters = mapping
        .filters
        .iter()
        .map(|(c, v)| Ok((col(c)?, v.as_str())))
        .collect::<Result<Vec<_>, IngestError>>()?;

    let cell = |row: &[String], i: usize| row.get(i).map(|s| s.trim()).unwrap_or("").to_string();

    let mut rows_filtered_out = 0;
    let mut dropped_missing = 0;
    let mut dropped_self_pairs = 0;
    let mut merged_duplicates = 0;
    let mut slot: HashMap<(Period, String, String), usize> = HashMap::new();
    let mut records: Vec<FlowRecord> = Vec::new();

    for (i, row) in table.rows.iter().enumerate() {
        let line = i + 2;
        if filters.iter().any(|&(c, v)| cell(row, c) != v) {
            rows_filtered_out += 1;
            continue;
        }
        let raw_value = cell(row, value_col);
        if raw_value.is_empty() || mapping.missing_markers.iter().any(|m| m == &raw_value) {
            dropped_missing += 1;
            continue;
        }
        let amount = parse_amount(&raw_value)
            .ok_or_else(|| IngestError::BadAmount { row: line, value: raw_value.clone() })?;
        let raw_period = cell(row, period_col);
        let period = parse_source_period(&raw_period)
            .ok_or(IngestError::MalformedPeriod { row: line, label: raw_period })?;
        let reporter = normalize_code(&cell(row, reporter_col));
        let counterparty = normalize_code(&cell(row, counterparty_col));
        if reporter.is_empty() || counterparty.is_empty() {
            return Err(IngestError::EmptyEntity { row: line });
        }
        if reporter == counterparty {
            dropped_self_pairs += 1;
            continue;
        }
        match slot.entry((period, reporter.clone(), counterparty.clone())) {
            std::collections::hash_map::Entry::Occupied(e) => {
                records[*e.get()].amount += amount;
                merged_duplicates += 1;
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(records.len());
                records.push(FlowRecord { period, reporter, counterparty, amount });
            }
        }
    }

    if records.is_empty() {
        return Err(IngestError::NothingSelected);
    }
    Ok(ConversionReport {
        records: FlowRecordSet::from_records(records),
        rows_read: table.rows.len(),
        rows_filtered_out,
        dropped_missing,
        dropped_self_pairs,
        merged_duplicates,
    })
}

// ---------------------------------------------------------------------------
// Synthetic core-periphery data
// ---------------------------------------------------------------------------

/// Parameters of a core-periphery network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub n_core: usize,
    pub n_periphery: usize,
    pub core_weight_scale: f64,
    pub periphery_weight_scale: f64,
    pub link_prob_pp: f64,
    pub seed: u64,
}

impl SyntheticParams {
    fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: &str| Err(IngestError::BadSynthetic(m.to_string()));
        if self.n_core < 1 {
            return bad("n_core must be at least 1");
        }
        if self.n_core + self.n_periphery < 2 {
            return bad("need at least two entities");
        }
        if !(self.core_weight_scale > 0.0 && self.core_weight_scale.is_finite())
            || !(self.periphery_weight_scale > 0.0 && self.periphery_weight_scale.is_finite())
        {
            return bad("weight scales must be positive and finite");
        }
        if !(0.0..=1.0).contains(&self.link_prob_pp) {
            return bad("link_prob_pp must lie in [0, 1]");
        }
        Ok(())
    }
}

fn entity_codes(n_core: usize, n_periphery: usize) -> (Vec<String>, Vec<String>) {
    let width = (n_core.max(n_periphery)).to_string().len().max(2);
    let core = (0..n_core).map(|i| format!("C{:0width$}", i + 1)).collect();
    let periphery = (0..n_periphery).map(|i| format!("P{:0width$}", i + 1)).collect();
    (core, periphery)
}

/// Uniform draw in (0, scale].
fn draw_weight(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    scale * (1.0 - rng.random::<f64>())
}

/// Generates one period of a core-periphery network.
///
/// Core entities are `C01..`, periphery `P01..`. All ordered core pairs and
/// all core/periphery pairs are linked; periphery pairs are linked with
/// probability `link_prob_pp`.
pub fn generate_synthetic(params: &SyntheticParams, period: Period) -> Result<FlowRecordSet, IngestError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (core, periphery) = entity_codes(params.n_core, params.n_periphery);
    let mut records = Vec::new();
    let mut push = |from: &String, to: &String, amount: f64| {
        records.push(FlowRecord { period, reporter: from.clone(), counterparty: to.clone(), amount });
    };

    for a in &core {
        for b in &core {
            if a != b {
                push(a, b, draw_weight(&mut rng, params.core_weight_scale));
            }
        }
    }
    for c in &core {
        for p in &periphery {
            push(c, p, draw_weight(&mut rng, params.periphery_weight_scale));
            push(p, c, draw_weight(&mut rng, params.periphery_weight_scale));
        }
    }
    for a in &periphery {
        for b in &periphery {
            if a != b {
                // Always consume both draws so the stream layout is independent of p.
                let u: f64 = rng.random();
                let w = draw_weight(&mut rng, params.periphery_weight_scale);
                if u < params.link_prob_pp {
                    push(a, b, w);
                }
            }
        }
    }
    Ok(FlowRecordSet::from_records(records))
}

/// Generates `n_periods` consecutive quarters starting at `start`, with the
/// periphery link probability ramped linearly from `params.link_prob_pp` to
/// `link_prob_pp_end`. Period k uses a sub-seed of `params.seed`.
pub fn generate_synthetic_series(
    params: &SyntheticParams,
    start: Period,
    n_periods: usize,
    link_prob_pp_end: f64,
) -> Result<FlowRecordSet, IngestError> {
    if n_periods == 0 {
        return Err(IngestError::BadSynthetic("n_periods must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&link_prob_pp_end) {
        return Err(IngestError::BadSynthetic("link_prob_pp_end must lie in [0, 1]".into()));
    }
    let mut period = start;
    let mut sets = Vec::with_capacity(n_periods);
    for k in 0..n_periods {
        let t = if n_periods == 1 { 0.0 } else { k as f64 / (n_periods - 1) as f64 };
        let p = SyntheticParams {
            link_prob_pp: params.link_prob_pp + (link_prob_pp_end - params.link_prob_pp) * t,
            seed: sub_seed(params.seed, k as u64),
            ..params.clone()
        };
        sets.push(generate_synthetic(&p, period)?);
        period = period.next();
    }
    Ok(FlowRecordSet::concat(sets))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Period {
        s.parse().unwrap()
    }

    #[test]
    fn parses_single_row() {
        let set = parse_flow_csv("period,reporter,counterparty,amount\n2008-Q3,US,GB,1250.5").unwrap();
        assert_eq!(
            set.records(),
            &[FlowRecord { period: q("2008-Q3"), reporter: "US".into(), counterparty: "GB".into(), amount: 1250.5 }]
        );
        assert_eq!(set.entities(), &["GB".to_string(), "US".to_string()]);
    }

    #[test]
    fn header_only_is_empty() {
        let set = parse_flow_csv("period,reporter,counterparty,amount\n").unwrap();
        assert!(set.is_empty());
        assert!(set.periods().is_empty());
    }

    #[test]
    fn rejects_self_loop_with_row_number() {
        let err = parse_flow_csv("period,reporter,counterparty,amount\n2008-Q3,US,US,10").unwrap_err();
        assert_eq!(err, IngestError::SelfLoop { row: 2, code: "US".into() });
    }

    #[test]
    fn reports_bad_rows() {
        let h = "period,reporter,counterparty,amount\n";
        let cases = [
            ("2008-Q5,US,GB,1", IngestError::MalformedPeriod { row: 2, label: "2008-Q5".into() }),
            ("2008Q3,US,GB,1", IngestError::MalformedPeriod { row: 2, label: "2008Q3".into() }),
            ("2008-Q3,US,GB,-1", IngestError::BadAmount { row: 2, value: "-1".into() }),
            ("2008-Q3,US,GB,abc", IngestError::BadAmount { row: 2, value: "abc".into() }),
            ("2008-Q3,US,GB", IngestError::MissingColumn { row: 2, found: 3 }),
        ];
        for (row, want) in cases {
            assert_eq!(parse_flow_csv(&format!("{h}{row}")).unwrap_err(), want);
        }
        let err = parse_flow_csv(&format!("{h}2008-Q3,US,GB,1\n2008-Q3,FR,FR,1")).unwrap_err();
        assert!(matches!(err, IngestError::SelfLoop { row: 3, .. }));
    }

    #[test]
    fn normalizes_codes_and_crlf() {
        let set = parse_flow_csv("period,reporter,counterparty,amount\r\n2008-Q3, us ,gb,1\r\n").unwrap();
        assert_eq!(set.records()[0].reporter, "US");
        assert_eq!(set.records()[0].counterparty, "GB");
    }

    #[test]
    fn period_order_is_chronological() {
        assert!(q("1999-Q4") < q("2000-Q1"));
        assert!(q("2000-Q1") < q("2000-Q2"));
        assert_eq!(q("1999-Q4").next(), q("2000-Q1"));
    }

    fn table(header: &[&str], rows: &[&[&str]]) -> Table {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        }
    }

    fn mapping() -> BisMapping {
        BisMapping::parse("period=TIME_PERIOD\nreporter=L_REP_CTY\ncounterparty=L_CP_COUNTRY\nvalue=OBS_VALUE").unwrap()
    }

    const HEADER: [&str; 4] = ["TIME_PERIOD", "L_REP_CTY", "L_CP_COUNTRY", "OBS_VALUE"];

    #[test]
    fn bis_drops_missing_values() {
        let t = table(&HEADER, &[&["2008-Q3", "US", "GB", "5"], &["2008-Q3", "GB", "US", ""], &["2008-Q3", "FR", "US", "2"]]);
        let rep = convert_bis_lbs(&t, &mapping()).unwrap();
        assert_eq!(rep.records.len(), 2);
        assert_eq!(rep.dropped_missing, 1);
    }

    #[test]
    fn bis_sums_duplicates() {
        let t = table(&HEADER, &[&["2008-Q3", "US", "GB", "5"], &["2008Q3", "US", "GB", "7"]]);
        let rep = convert_bis_lbs(&t, &mapping()).unwrap();
        assert_eq!(rep.records.len(), 1);
        assert_eq!(rep.records.records()[0].amount, 12.0);
        assert_eq!(rep.merged_duplicates, 1);
    }

    #[test]
    fn bis_rejects_absent_column() {
        let mut m = mapping();
        m.value = "valuee".into();
        let t = table(&HEADER, &[&["2008-Q3", "US", "GB", "5"]]);
        assert_eq!(convert_bis_lbs(&t, &m).unwrap_err(), IngestError::AbsentColumn("valuee".into()));
    }

    #[test]
    fn bis_filters_and_empty_result() {
        let mut header = HEADER.to_vec();
        header.push("L_INSTR");
        let t = table(&header, &[&["2008-Q3", "US", "GB", "5", "A"], &["2008-Q3", "US", "GB", "9", "L"]]);
        let mut m = BisMapping::parse(
            r#"{"period":"TIME_PERIOD","reporter":"L_REP_CTY","counterparty":"L_CP_COUNTRY","value":"OBS_VALUE","filters":{"L_INSTR":"A"}}"#,
        )
        .unwrap();
        let rep = convert_bis_lbs(&t, &m).unwrap();
        assert_eq!(rep.records.records()[0].amount, 5.0);
        assert_eq!(rep.rows_filtered_out, 1);

        m.filters.insert("L_INSTR".into(), "Z".into());
        assert_eq!(convert_bis_lbs(&t, &m).unwrap_err(), IngestError::NothingSelected);
    }

    #[test]
    fn mapping_rejects_unknown_keys() {
        let err = BisMapping::parse("period=a\nreporter=b\ncounterparty=c\nvalue=d\nvalu=e").unwrap_err();
        assert!(matches!(err, IngestError::BadMapping(_)));
    }

    fn params(n_core: usize, n_periphery: usize, p: f64) -> SyntheticParams {
        SyntheticParams {
            n_core,
            n_periphery,
            core_weight_scale: 100.0,
            periphery_weight_scale: 1.0,
            link_prob_pp: p,
            seed: 7,
        }
    }

    #[test]
    fn synthetic_record_counts() {
        let p0 = q("2000-Q1");
        assert_eq!(generate_synthetic(&params(2, 0, 0.5), p0).unwrap().len(), 2);
        assert_eq!(generate_synthetic(&params(1, 1, 0.0), p0).unwrap().len(), 2);
        // 3*2 core + 2*3*4 core/periphery + 4*3 periphery at p = 1
        assert_eq!(generate_synthetic(&params(3, 4, 1.0), p0).unwrap().len(), 6 + 24 + 12);
    }

    #[test]
    fn synthetic_is_seed_deterministic() {
        let p0 = q("2000-Q1");
        let a = generate_synthetic(&params(4, 6, 0.3), p0).unwrap();
        let b = generate_synthetic(&params(4, 6, 0.3), p0).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let mut other = params(4, 6, 0.3);
        other.seed = 8;
        assert_ne!(a.to_csv(), generate_synthetic(&other, p0).unwrap().to_csv());
    }

    #[test]
    fn synthetic_rejects_bad_params() {
        let p0 = q("2000-Q1");
        assert!(generate_synthetic(&params(1, 0, 0.0), p0).is_err());
        assert!(generate_synthetic(&params(0, 3, 0.0), p0).is_err());
        assert!(generate_synthetic(&params(2, 2, 1.5), p0).is_err());
        let mut p = params(2, 2, 0.5);
        p.core_weight_scale = 0.0;
        assert!(generate_synthetic(&p, p0).is_err());
    }

    #[test]
    fn synthetic_series_spans_quarters() {
        let set = generate_synthetic_series(&params(2, 3, 0.0), q("2000-Q3"), 4, 1.0).unwrap();
        assert_eq!(set.periods(), &[q("2000-Q3"), q("2000-Q4"), q("2001-Q1"), q("2001-Q2")]);
        assert_eq!(set.entities().len(), 5);
    }
}
