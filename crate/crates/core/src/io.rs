//! CSV ingestion and export, `key = value` configuration files, number formatting and
//! plain-text run reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{DesignMatrix, ResponseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub enum ResponseSpec {
    /// One column of labels. `categories` fixes the order (last = reference); `None`
    /// takes labels in order of first appearance.
    Label {
        column: String,
        categories: Option<Vec<String>>,
    },
    /// One 0/1 column per category, in category order.
    OneHot { columns: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub response: ResponseSpec,
    pub predictors: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub design: DesignMatrix,
    pub response: ResponseMatrix,
    /// Category names in model order.
    pub categories: Vec<String>,
    pub predictors: Vec<String>,
    /// Hex SHA-256 of the file bytes.
    pub digest: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Data {
        line: 1,
        column: name.to_string(),
        message: "column not found in header".into(),
    })
}

fn cell<'r>(record: &'r csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<&'r str> {
    let v = record.get(idx).map(str::trim).unwrap_or("");
    if v.is_empty() {
        return Err(Error::Data {
            line,
            column: name.to_string(),
            message: "missing value".into(),
        });
    }
    Ok(v)
}

fn number(record: &csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<f64> {
    let raw = cell(record, idx, name, line)?;
    let v: f64 = raw.parse().map_err(|_| Error::Data {
        line,
        column: name.to_string(),
        message: format!("`{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Data {
            line,
            column: name.to_string(),
            message: format!("`{raw}` is not finite"),
        });
    }
    Ok(v)
}

/// Reads a headed, comma-delimited file into a design (intercept prepended) and responses.
/// Column names from the header row of a CSV file.
pub fn csv_header(path: &Path) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    Ok(reader.headers()?.iter().map(str::to_string).collect())
}

pub fn load_csv(spec: &DatasetSpec) -> Result<LoadedDataset> {
    let bytes = std::fs::read(&spec.path)?;
    load_csv_bytes(&bytes, spec)
}

pub fn load_csv_bytes(bytes: &[u8], spec: &DatasetSpec) -> Result<LoadedDataset> {
    let digest = sha256_hex(bytes);
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(bytes);
    let headers = reader.headers()?.clone();
    let pred_idx: Vec<usize> = spec
        .predictors
        .iter()
        .map(|p| column_index(&headers, p))
        .collect::<Result<_>>()?;

    let mut data = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut categories: Vec<String> = match &spec.response {
        ResponseSpec::Label { categories, .. } => categories.clone().unwrap_or_default(),
        ResponseSpec::OneHot { columns } => columns.clone(),
    };
    let fixed_order = !matches!(&spec.response, ResponseSpec::Label { categories: None, .. });
    let response_idx: Vec<usize> = match &spec.response {
        ResponseSpec::Label { column, .. } => vec![column_index(&headers, column)?],
        ResponseSpec::OneHot { columns } => columns.iter().map(|c| column_index(&headers, c)).collect::<Result<_>>()?,
    };

    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(Error::Data {
                line,
                column: headers.get(record.len()).unwrap_or("").to_string(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        data.push(1.0);
        for (&idx, name) in pred_idx.iter().zip(&spec.predictors) {
            data.push(number(&record, idx, name, line)?);
        }
        match &spec.response {
            ResponseSpec::Label { column, .. } => {
                let label = cell(&record, response_idx[0], column, line)?;
                let c = match categories.iter().position(|c| c == label) {
                    Some(c) => c,
                    None if !fixed_order => {
                        categories.push(label.to_string());
                        categories.len() - 1
                    }
                    None => {
                        return Err(Error::Data {
                            line,
                            column: column.clone(),
                            message: format!("unknown label `{label}`"),
                        })
                    }
                };
                labels.push(c);
            }
            ResponseSpec::OneHot { columns } => {
                let mut hot = None;
                for (j, (&idx, name)) in response_idx.iter().zip(columns).enumerate() {
                    let v = number(&record, idx, name, line)?;
                    if v == 1.0 && hot.is_none() {
                        hot = Some(j);
                    } else if v != 0.0 {
                        return Err(Error::Data {
                            line,
                            column: name.clone(),
                            message: "one-hot row must contain a single 1 and zeros elsewhere".into(),
                        });
                    }
                }
                labels.push(hot.ok_or_else(|| Error::Data {
                    line,
                    column: columns.join(","),
                    message: "one-hot row has no category".into(),
                })?);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::invalid("data file has no rows"));
    }
    if categories.len() < 2 {
        return Err(Error::invalid("response needs at least two categories"));
    }
    let n = labels.len();
    let design = DesignMatrix::new(n, spec.predictors.len() + 1, data)?;
    let response = ResponseMatrix::new(labels, categories.len())?;
    Ok(LoadedDataset {
        design,
        response,
        categories,
        predictors: spec.predictors.clone(),
        digest,
    })
}

/// Category order of the bundled diabetes data; `overt` is the reference.
pub const DIABETES_CATEGORIES: [&str; 3] = ["normal", "chemical", "overt"];
pub const DIABETES_PREDICTORS: [&str; 2] = ["sspg", "insulin"];

pub fn diabetes_spec(path: impl Into<PathBuf>) -> DatasetSpec {
    DatasetSpec {
        path: path.into(),
        response: ResponseSpec::Label {
            column: "class".into(),
            categories: Some(DIABETES_CATEGORIES.iter().map(|s| s.to_string()).collect()),
        },
        predictors: DIABETES_PREDICTORS.iter().map(|s| s.to_string()).collect(),
    }
}

/// The diabetes data shipped with the crate (145 rows).
pub fn diabetes_fixture() -> Result<LoadedDataset> {
    load_csv_bytes(include_bytes!("../fixtures/diabetes.csv"), &diabetes_spec("diabetes.csv"))
}

/// Writes predictors and a label column `response_column`; values keep full precision.
pub fn write_dataset_csv<W: Write>(
    out: W,
    design: &DesignMatrix,
    response: &ResponseMatrix,
    predictors: &[String],
    categories: &[String],
    response_column: &str,
) -> Result<()> {
    if predictors.len() + 1 != design.n_cols() {
        return Err(Error::dims("predictor names", design.n_cols() - 1, predictors.len()));
    }
    if categories.len() != response.n_categories() {
        return Err(Error::dims("category names", response.n_categories(), categories.len()));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = predictors.iter().map(String::as_str).collect();
    header.push(response_column);
    w.write_record(&header)?;
    for (x, &c) in design.rows().zip(response.categories()) {
        let mut rec: Vec<String> = x[1..].iter().map(f64::to_string).collect();
        rec.push(categories[c].clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `key = value` lines; `#` starts a comment. Duplicate keys are an error.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        if map.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
        }
    }
    Ok(map)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Typed access to a parsed configuration that rejects unknown keys.
#[derive(Debug)]
pub struct ConfigReader {
    map: BTreeMap<String, String>,
    used: Vec<String>,
}

impl ConfigReader {
    pub fn new(map: BTreeMap<String, String>) -> Self {
        Self { map, used: Vec::new() }
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        self.used.push(key.to_string());
        self.map.get(key).cloned()
    }

    pub fn get<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    pub fn list<T: std::str::FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{}`", s.trim())))
                })
                .collect(),
        }
    }

    pub fn string(&mut self, key: &str, default: &str) -> String {
        self.raw(key).unwrap_or_else(|| default.to_string())
    }

    /// Errors on keys that were never requested.
    pub fn finish(self) -> Result<()> {
        let unknown: Vec<&String> = self.map.keys().filter(|k| !self.used.contains(k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "unknown keys: {}",
                unknown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )))
        }
    }
}

/// Six significant digits in `%g` style, or the shortest round-trip form when `raw`.
pub fn format_number(x: f64, raw: bool) -> String {
    if raw || !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: impl Into<String>, header: &[&str]) -> Self {
        Self {
            title: title.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn render(&self, out: &mut String) {
        let cols = self.header.len();
        let mut width: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let _ = writeln!(out, "## {}", self.title);
        let line = |cells: &[String]| {
            cells
                .iter()
                .take(cols)
                .zip(&width)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let _ = writeln!(out, "{}", line(&self.header));
        for r in &self.rows {
            let _ = writeln!(out, "{}", line(r));
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Human-readable record of one command run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub input_digest: Option<String>,
    pub seed: Option<u64>,
    pub notes: Vec<String>,
    pub tables: Vec<Table>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            ..Self::default()
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# command: {}", self.command);
        if let Some(d) = &self.input_digest {
            let _ = writeln!(out, "# input sha256: {d}");
        }
        if let Some(s) = self.seed {
            let _ = writeln!(out, "# seed: {s}");
        }
        for n in &self.notes {
            let _ = writeln!(out, "# {n}");
        }
        for t in &self.tables {
            out.push('\n');
            t.render(&mut out);
        }
        if !self.warnings.is_empty() {
            out.push('\n');
            for w in &self.warnings {
                let _ = writeln!(out, "warning: {w}");
            }
        }
        out
    }
}
