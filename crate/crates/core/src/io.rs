//! Dataset files, simulation configs and result reports.
//!
//! Datasets are JSON documents with an explicit `participation_units`
//! declaration (`"fraction"` or `"percent"`). Measurement samples may be
//! given inline or in a CSV file with columns `device_id,q_low,q_high`.
//! Reports wrap a result together with the SHA-256 digests of the inputs it
//! was computed from.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::{DesignSearchResult, RatioRow};
use crate::error::{Error, Result};
use crate::model::{validate_regions, DeviceGeometry, LossBasis, LossVector, ParticipationMatrix, QtlsDistribution, RegionSpec};
use crate::simexp::{SimExpConfig, WorstCaseCurve, DEFAULT_MC_TRIALS, DEFAULT_RELATIVE_SD, DEFAULT_REPETITIONS};
use crate::solver::ConditionReport;
use crate::stats::{histogram, Interval};
use crate::uncertainty::{summarize, ExtractionResult, MeasurementSet, Prediction, TangentSummary};

pub const FORMAT_VERSION: u32 = 1;
pub const HISTOGRAM_BINS: usize = 50;

/// Serializes infinite values as the strings `"inf"` / `"-inf"`, which JSON
/// numbers cannot represent.
pub mod float_or_inf {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("expected a number, got `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipationUnits {
    Fraction,
    Percent,
}

/// Region set, devices and optional measurements for one analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dataset {
    #[serde(default = "format_version")]
    pub format_version: u32,
    pub participation_units: ParticipationUnits,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub regions: Vec<RegionSpec>,
    pub devices: Vec<DeviceGeometry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub measurements: Vec<MeasurementSet>,
    /// CSV of measurement samples, relative to the dataset file. Merged into
    /// `measurements` on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurements_csv: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub distributions: Vec<QtlsDistribution>,
}

fn format_version() -> u32 {
    FORMAT_VERSION
}

impl Dataset {
    /// Parses and validates a dataset. `base_dir` resolves `measurements_csv`.
    pub fn from_json_str(text: &str, base_dir: Option<&Path>) -> Result<Dataset> {
        let mut ds: Dataset = serde_json::from_str(text).map_err(|e| Error::schema("dataset", e.to_string()))?;
        if let Some(csv_name) = ds.measurements_csv.take() {
            let path = base_dir.map(|d| d.join(&csv_name)).unwrap_or_else(|| PathBuf::from(&csv_name));
            let extra = read_measurements_csv(&path)?;
            for set in extra {
                match ds.measurements.iter_mut().find(|m| m.device_id == set.device_id) {
                    Some(m) => {
                        m.q_low_samples.extend(set.q_low_samples);
                        m.q_high_samples.extend(set.q_high_samples);
                    }
                    None => ds.measurements.push(set),
                }
            }
        }
        if ds.participation_units == ParticipationUnits::Percent {
            for dev in &mut ds.devices {
                for p in &mut dev.participation {
                    *p /= 100.0;
                }
            }
            ds.participation_units = ParticipationUnits::Fraction;
        }
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::schema(
                "format_version",
                format!("unsupported version {} (expected {FORMAT_VERSION})", self.format_version),
            ));
        }
        for (i, r) in self.regions.iter().enumerate() {
            r.validate()
                .map_err(|e| Error::schema(format!("regions[{i}] (`{}`)", r.name), e.to_string()))?;
        }
        validate_regions(&self.regions).map_err(|e| Error::schema("regions", e.to_string()))?;
        for (j, dev) in self.devices.iter().enumerate() {
            if dev.participation.len() != self.regions.len() {
                return Err(Error::schema(
                    format!("devices[{j}] (id `{}`)", dev.id),
                    format!(
                        "participation has {} entries but {} regions are defined",
                        dev.participation.len(),
                        self.regions.len()
                    ),
                ));
            }
        }
        ParticipationMatrix::new(self.regions.clone(), self.devices.clone())
            .map_err(|e| Error::schema("devices", e.to_string()))?;
        let known = |id: &str| self.devices.iter().any(|d| d.id == id);
        for (k, m) in self.measurements.iter().enumerate() {
            let loc = format!("measurements[{k}] (device `{}`)", m.device_id);
            if !known(&m.device_id) {
                return Err(Error::schema(loc, "references an undefined device"));
            }
            m.validate().map_err(|e| Error::schema(loc, e.to_string()))?;
        }
        for (k, d) in self.distributions.iter().enumerate() {
            let loc = format!("distributions[{k}] (device `{}`)", d.device_id);
            if !known(&d.device_id) {
                return Err(Error::schema(loc, "references an undefined device"));
            }
            d.validate().map_err(|e| Error::schema(loc, e.to_string()))?;
        }
        Ok(())
    }

    pub fn participation_matrix(&self) -> Result<ParticipationMatrix> {
        ParticipationMatrix::new(self.regions.clone(), self.devices.clone())
    }

    /// Summaries for every measured device, in device order.
    pub fn summaries(&self) -> Result<Vec<QtlsDistribution>> {
        self.devices
            .iter()
            .filter_map(|dev| self.measurements.iter().find(|m| m.device_id == dev.id))
            .map(summarize)
            .collect()
    }

    /// One distribution per device: given explicitly, or summarized from
    /// the measurement samples.
    pub fn distributions_for_devices(&self) -> Result<Vec<QtlsDistribution>> {
        self.devices
            .iter()
            .map(|dev| {
                if let Some(d) = self.distributions.iter().find(|d| d.device_id == dev.id) {
                    return Ok(d.clone());
                }
                if let Some(m) = self.measurements.iter().find(|m| m.device_id == dev.id) {
                    return summarize(m);
                }
                Err(Error::schema(
                    format!("device `{}`", dev.id),
                    "no measurements or Q_TLS distribution",
                ))
            })
            .collect()
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = read_text(path)?;
    Dataset::from_json_str(&text, path.parent()).map_err(|e| match e {
        Error::Schema { location, message } => Error::Schema {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &to_json(ds)?)
}

/// Reads `device_id,q_low,q_high` rows, grouping samples by device in order
/// of first appearance.
pub fn read_measurements_csv(path: &Path) -> Result<Vec<MeasurementSet>> {
    #[derive(Deserialize)]
    struct Row {
        device_id: String,
        q_low: f64,
        q_high: f64,
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::schema(path.display().to_string(), e.to_string()))?;
    let mut sets: Vec<MeasurementSet> = Vec::new();
    for (k, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::schema(format!("{} row {}", path.display(), k + 1), e.to_string()))?;
        match sets.iter_mut().find(|s| s.device_id == row.device_id) {
            Some(s) => {
                s.q_low_samples.push(row.q_low);
                s.q_high_samples.push(row.q_high);
            }
            None => sets.push(MeasurementSet::new(row.device_id, vec![row.q_low], vec![row.q_high])),
        }
    }
    Ok(sets)
}

/// Region list from either a bare `{"regions": [...]}` file or a dataset.
pub fn load_regions(path: impl AsRef<Path>) -> Result<Vec<RegionSpec>> {
    #[derive(Deserialize)]
    struct RegionsOnly {
        regions: Vec<RegionSpec>,
    }
    let path = path.as_ref();
    let parsed: RegionsOnly = parse_json(path, &read_text(path)?)?;
    validate_regions(&parsed.regions)?;
    Ok(parsed.regions)
}

pub fn load_loss_vector(path: impl AsRef<Path>) -> Result<LossVector> {
    let path = path.as_ref();
    let v: LossVector = parse_json(path, &read_text(path)?)?;
    v.validate()?;
    Ok(v)
}

/// On-disk form of a simulated-experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimExpConfigFile {
    /// Dataset path, relative to the config file.
    pub dataset: String,
    /// Known losses, in either basis.
    pub target: LossVector,
    pub n_devices_grid: Vec<usize>,
    #[serde(default = "default_relative_sd")]
    pub relative_sd: f64,
    #[serde(default = "default_repetitions")]
    pub n_repetitions: usize,
    #[serde(default = "default_mc_trials")]
    pub mc_trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_relative_sd() -> f64 {
    DEFAULT_RELATIVE_SD
}
fn default_repetitions() -> usize {
    DEFAULT_REPETITIONS
}
fn default_mc_trials() -> usize {
    DEFAULT_MC_TRIALS
}

/// Loads a config and its dataset. `seed` overrides the file's seed.
/// Returns the config together with the digests of both files.
pub fn load_simexp_config(path: impl AsRef<Path>, seed: Option<u64>) -> Result<(SimExpConfig, Vec<InputDigest>)> {
    let path = path.as_ref();
    let file: SimExpConfigFile = parse_json(path, &read_text(path)?)?;
    let ds_path = path.parent().unwrap_or(Path::new(".")).join(&file.dataset);
    let ds = load_dataset(&ds_path)?;
    let participation = ds.participation_matrix()?;
    let target = file.target.to_factors(participation.regions())?;
    let mut cfg = SimExpConfig::new(participation, target, file.n_devices_grid, seed.or(file.seed).unwrap_or(0));
    cfg.relative_sd = file.relative_sd;
    cfg.n_repetitions = file.n_repetitions;
    cfg.mc_trials = file.mc_trials;
    cfg.validate()?;
    Ok((cfg, vec![digest_file(path)?, digest_file(&ds_path)?]))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    /// File name without directories, so reports do not depend on where
    /// inputs were stored.
    pub name: String,
    pub sha256: String,
}

pub fn digest_bytes(name: impl Into<String>, bytes: &[u8]) -> InputDigest {
    InputDigest {
        name: name.into(),
        sha256: hex::encode(Sha256::digest(bytes)),
    }
}

pub fn digest_file(path: impl AsRef<Path>) -> Result<InputDigest> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(digest_bytes(name, &bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// CSV for `.csv` paths, JSON otherwise.
    pub fn from_path(path: &Path) -> ReportFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

/// A result that can be written as JSON and as a flat CSV table.
pub trait ReportData: Serialize {
    /// Header row followed by data rows.
    fn csv_table(&self) -> Vec<Vec<String>>;
}

/// Result plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub tool: String,
    pub version: String,
    pub inputs: Vec<InputDigest>,
    pub result: T,
}

impl<T> Report<T> {
    pub fn new(inputs: Vec<InputDigest>, result: T) -> Self {
        Report {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs,
            result,
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn csv_string(table: &[Vec<String>]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    for row in table {
        w.write_record(row)
            .map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn render_report<T: ReportData>(report: &Report<T>, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => to_json(report),
        ReportFormat::Csv => {
            let mut out = format!("# {} {}\n", report.tool, report.version);
            for d in &report.inputs {
                out.push_str(&format!("# input {} sha256={}\n", d.name, d.sha256));
            }
            out.push_str(&csv_string(&report.result.csv_table())?);
            Ok(out)
        }
    }
}

pub fn write_report<T: ReportData>(report: &Report<T>, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    write_text(path, &render_report(report, format)?)
}

pub fn read_report<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Report<T>> {
    let path = path.as_ref();
    parse_json(path, &read_text(path)?)
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Extraction result as written by the CLI: loss factors plus the same
/// statistics converted to loss tangents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub extraction: ExtractionResult,
    pub tangents: TangentSummary,
    /// Loss factor per unit loss tangent, per region.
    pub tangent_scale: Vec<f64>,
}

impl ExtractionReport {
    pub fn new(extraction: ExtractionResult, regions: &[RegionSpec]) -> Result<Self> {
        let tangents = extraction.to_tangents(regions)?;
        let tangent_scale = regions
            .iter()
            .map(RegionSpec::tangent_to_factor_scale)
            .collect::<Result<Vec<_>>>()?;
        Ok(ExtractionReport {
            extraction,
            tangents,
            tangent_scale,
        })
    }
}

fn histogram_table(result: &ExtractionResult, scales: Option<&[f64]>) -> Vec<Vec<String>> {
    let mut table = vec![vec![
        "region".to_string(),
        "bin".into(),
        "factor_low".into(),
        "factor_high".into(),
        "tangent_low".into(),
        "tangent_high".into(),
        "count".into(),
    ]];
    for (i, region) in result.regions().iter().enumerate() {
        for (k, bin) in histogram(&result.region_samples(i), HISTOGRAM_BINS).iter().enumerate() {
            let (tl, th) = match scales {
                Some(s) => (num(bin.low / s[i]), num(bin.high / s[i])),
                None => (String::new(), String::new()),
            };
            table.push(vec![
                region.clone(),
                k.to_string(),
                num(bin.low),
                num(bin.high),
                tl,
                th,
                bin.count.to_string(),
            ]);
        }
    }
    table
}

impl ReportData for ExtractionResult {
    fn csv_table(&self) -> Vec<Vec<String>> {
        histogram_table(self, None)
    }
}

impl ReportData for ExtractionReport {
    fn csv_table(&self) -> Vec<Vec<String>> {
        histogram_table(&self.extraction, Some(&self.tangent_scale))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub device_id: String,
    pub participation: Vec<f64>,
    pub prediction: Prediction,
}

impl ReportData for PredictionReport {
    fn csv_table(&self) -> Vec<Vec<String>> {
        vec![
            ["device_id", "q_mean", "q_ci95_low", "q_ci95_high", "n_used", "n_skipped"]
                .map(String::from)
                .to_vec(),
            vec![
                self.device_id.clone(),
                num(self.prediction.q_mean),
                num(self.prediction.q_ci95.low),
                num(self.prediction.q_ci95.high),
                self.prediction.n_used.to_string(),
                self.prediction.n_skipped.to_string(),
            ],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRow {
    pub device_id: String,
    /// Per-region inverse Q, in region order.
    pub contributions: Vec<f64>,
    pub inv_q_total: f64,
    pub q_tls: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub loss_factors: LossVector,
    pub rows: Vec<DecompositionRow>,
}

impl ReportData for DecompositionReport {
    fn csv_table(&self) -> Vec<Vec<String>> {
        let mut header = vec!["device_id".to_string()];
        header.extend(self.loss_factors.regions.iter().map(|r| format!("inv_q_{r}")));
        header.extend(["inv_q_total".to_string(), "q_tls".to_string()]);
        let mut table = vec![header];
        for row in &self.rows {
            let mut line = vec![row.device_id.clone()];
            line.extend(row.contributions.iter().map(|&v| num(v)));
            line.extend([num(row.inv_q_total), num(row.q_tls)]);
            table.push(line);
        }
        table
    }
}

impl ReportData for ConditionReport {
    fn csv_table(&self) -> Vec<Vec<String>> {
        let mut table = vec![
            vec!["quantity".to_string(), "value".to_string()],
            vec!["kappa".into(), num(self.kappa)],
            vec!["rank_estimate".into(), self.rank_estimate.to_string()],
        ];
        for (k, s) in self.singular_values.iter().enumerate() {
            table.push(vec![format!("singular_value_{}", k + 1), num(*s)]);
        }
        table
    }
}

impl ReportData for DesignSearchResult {
    fn csv_table(&self) -> Vec<Vec<String>> {
        let mut table = vec![vec!["rank".to_string(), "device_ids".into(), "kappa".into()]];
        for (k, alt) in self.ranked_alternatives.iter().enumerate() {
            table.push(vec![(k + 1).to_string(), alt.ids.join(";"), num(alt.kappa)]);
        }
        table
    }
}

impl ReportData for WorstCaseCurve {
    fn csv_table(&self) -> Vec<Vec<String>> {
        let mut table = vec![["region", "n_devices", "worst_low", "worst_high", "target"]
            .map(String::from)
            .to_vec()];
        for p in &self.points {
            let i = self.regions.iter().position(|r| *r == p.region).unwrap_or(0);
            table.push(vec![
                p.region.clone(),
                p.n_devices.to_string(),
                num(p.worst_low),
                num(p.worst_high),
                num(self.target[i]),
            ]);
        }
        table
    }
}

impl ReportData for LossVector {
    fn csv_table(&self) -> Vec<Vec<String>> {
        let basis = match self.basis {
            LossBasis::LossFactor => "loss_factor",
            LossBasis::LossTangent => "loss_tangent",
        };
        let mut table = vec![vec!["region".to_string(), "basis".into(), "value".into()]];
        for (r, v) in self.regions.iter().zip(&self.values) {
            table.push(vec![r.clone(), basis.into(), num(*v)]);
        }
        table
    }
}

impl ReportData for Vec<QtlsDistribution> {
    fn csv_table(&self) -> Vec<Vec<String>> {
        let mut table = vec![["device_id", "inv_q_mean", "inv_q_stderr", "n_samples", "q_mean"]
            .map(String::from)
            .to_vec()];
        for d in self {
            table.push(vec![
                d.device_id.clone(),
                num(d.inv_q_mean),
                num(d.inv_q_stderr),
                d.n_samples.to_string(),
                num(d.q_mean()),
            ]);
        }
        table
    }
}

impl ReportData for Vec<RatioRow> {
    fn csv_table(&self) -> Vec<Vec<String>> {
        let mut table = vec![["device_id", "d_um", "ratio", "flagged"].map(String::from).to_vec()];
        for r in self {
            table.push(vec![
                r.device_id.clone(),
                r.d_um.map(num).unwrap_or_default(),
                r.ratio.map(num).unwrap_or_default(),
                r.flagged.to_string(),
            ]);
        }
        table
    }
}

impl ReportData for Dataset {
    fn csv_table(&self) -> Vec<Vec<String>> {
        let mut header = vec!["device_id".to_string()];
        header.extend(self.regions.iter().map(|r| r.name.clone()));
        let mut table = vec![header];
        for d in &self.devices {
            let mut row = vec![d.id.clone()];
            row.extend(d.participation.iter().map(|&p| num(p)));
            table.push(row);
        }
        table
    }
}

impl ReportData for Interval {
    fn csv_table(&self) -> Vec<Vec<String>> {
        vec![vec!["low".into(), "high".into()], vec![num(self.low), num(self.high)]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    const FOUR_REGIONS: &str = r#"[
        {"name":"MS","kind":"interface_perpendicular","t_nom_nm":10,"eps_nom":11.35,"t_assumed_nm":2,"eps_assumed":11.4},
        {"name":"SA","kind":"interface_parallel","t_nom_nm":10,"eps_nom":4,"t_assumed_nm":2,"eps_assumed":4},
        {"name":"MA","kind":"interface_perpendicular","t_nom_nm":10,"eps_nom":10,"t_assumed_nm":2,"eps_assumed":10},
        {"name":"Si","kind":"bulk","eps_nom":11.35,"eps_assumed":11.35}
    ]"#;

    #[test]
    fn bundled_iso_fixture_loads() {
        let ds = fixtures::p_iso();
        assert_eq!(ds.devices.len(), 4);
        assert_eq!(ds.participation_units, ParticipationUnits::Fraction);
        assert!((ds.devices[0].participation[3] - 0.861487).abs() < 1e-15);
    }

    #[test]
    fn short_participation_names_device() {
        let text = format!(
            r#"{{"participation_units":"fraction","regions":{FOUR_REGIONS},
               "devices":[{{"id":"ok","participation":[0.1,0.1,0.1,0.1]}},
                          {{"id":"short-one","participation":[0.1,0.1,0.1]}}]}}"#
        );
        let err = Dataset::from_json_str(&text, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("short-one") && msg.contains("devices[1]"), "{msg}");
    }

    #[test]
    fn missing_units_is_an_error() {
        let text = format!(r#"{{"regions":{FOUR_REGIONS},"devices":[]}}"#);
        let msg = Dataset::from_json_str(&text, None).unwrap_err().to_string();
        assert!(msg.contains("participation_units"), "{msg}");
    }

    #[test]
    fn percent_is_divided_on_load() {
        let text = format!(
            r#"{{"participation_units":"percent","regions":{FOUR_REGIONS},
               "devices":[{{"id":"a","participation":[0.2738,0.1473,0.0174,86.1487]}}]}}"#
        );
        let ds = Dataset::from_json_str(&text, None).unwrap();
        for (got, want) in ds.devices[0].participation.iter().zip([0.002738, 0.001473, 0.000174, 0.861487]) {
            assert!((got - want).abs() < 1e-17);
        }
    }

    #[test]
    fn measurements_must_reference_devices() {
        let text = format!(
            r#"{{"participation_units":"fraction","regions":{FOUR_REGIONS},
               "devices":[{{"id":"a","participation":[0.1,0.1,0.1,0.1]}}],
               "measurements":[{{"device_id":"b","q_low_samples":[1e6],"q_high_samples":[1e7]}}]}}"#
        );
        let msg = Dataset::from_json_str(&text, None).unwrap_err().to_string();
        assert!(msg.contains("measurements[0]"), "{msg}");
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = format!(r#"{{"participation_units":"fraction","regions":{FOUR_REGIONS},"devices":[],"bogus":1}}"#);
        assert!(Dataset::from_json_str(&text, None).is_err());
    }

    #[test]
    fn csv_measurements_are_merged() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("m.csv"),
            "device_id,q_low,q_high\n# comment\na,1e6,1e12\na,2e6,1e12\n",
        )
        .unwrap();
        let text = format!(
            r#"{{"participation_units":"fraction","regions":{FOUR_REGIONS},
               "devices":[{{"id":"a","participation":[0.1,0.1,0.1,0.1]}}],
               "measurements_csv":"m.csv"}}"#
        );
        fs::write(dir.path().join("d.json"), text).unwrap();
        let ds = load_dataset(dir.path().join("d.json")).unwrap();
        assert_eq!(ds.measurements[0].q_low_samples, vec![1e6, 2e6]);
        let s = ds.summaries().unwrap();
        let expected = 7.5e-7 - 1e-12;
        assert!((s[0].inv_q_mean - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = fixtures::p_ani();
        let path = dir.path().join("out.json");
        write_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn infinite_kappa_round_trips() {
        let r = ConditionReport {
            kappa: f64::INFINITY,
            singular_values: vec![1.0, 0.0],
            rank_estimate: 1,
        };
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"inf\""));
        let back: ConditionReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn csv_report_carries_digest() {
        let lv = LossVector::tangents(&RegionSpec::default_set(), vec![4.8e-4, 1.7e-3, 3.3e-3, 2.6e-7]).unwrap();
        let report = Report::new(vec![digest_bytes("x.json", b"abc")], lv);
        let text = render_report(&report, ReportFormat::Csv).unwrap();
        assert!(text.contains("sha256=ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"));
        assert!(text.contains("MS,loss_tangent,0.00048"));
        let json = render_report(&report, ReportFormat::Json).unwrap();
        let back: Report<LossVector> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(ReportFormat::from_path(Path::new("a/b.CSV")), ReportFormat::Csv);
        assert_eq!(ReportFormat::from_path(Path::new("a/b.json")), ReportFormat::Json);
        assert_eq!(ReportFormat::from_path(Path::new("noext")), ReportFormat::Json);
    }
}
