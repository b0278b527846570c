//! CSV ingest and export driven by a TOML schema file.
//!
//! ```toml
//! format_version = 1
//!
//! [[columns]]
//! name = "item_category"
//! role = "feature"
//! vocab_size = 1000
//! encoding = "hash"      # or "index"
//!
//! [[columns]]
//! name = "scenario"
//! role = "domain"
//! values = ["home", "search", "cart"]
//!
//! [[columns]]
//! name = "click"
//! role = "label"
//! ```
//!
//! `index` columns hold integer ids below `vocab_size`. `hash` columns hold
//! arbitrary tokens; an empty token maps to bucket 0 and every other token to
//! `1 + fnv1a(token) % (vocab_size - 1)`. Columns with role `ignore` are read
//! and discarded. The header must list the schema columns in order.

use std::fs::File;
use std::hash::Hasher;
use std::io::Write;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetField, Example};
use crate::error::{Error, Result};

pub const SCHEMA_FORMAT_VERSION: u32 = 1;
/// Bucket for empty tokens in hashed columns.
pub const OOV_BUCKET: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    #[default]
    Index,
    Hash,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum Column {
    Feature {
        name: String,
        vocab_size: usize,
        #[serde(default)]
        encoding: Encoding,
    },
    Domain {
        name: String,
        values: Vec<String>,
    },
    Label {
        name: String,
    },
    Ignore {
        name: String,
    },
}

impl Column {
    pub fn name(&self) -> &str {
        match self {
            Column::Feature { name, .. }
            | Column::Domain { name, .. }
            | Column::Label { name }
            | Column::Ignore { name } => name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub format_version: u32,
    pub columns: Vec<Column>,
}

impl CsvSchema {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != SCHEMA_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "schema format_version {} is not supported (expected {SCHEMA_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let count = |pred: fn(&Column) -> bool| self.columns.iter().filter(|c| pred(c)).count();
        if count(|c| matches!(c, Column::Domain { .. })) != 1 || count(|c| matches!(c, Column::Label { .. })) != 1 {
            return Err(Error::Config("schema needs exactly one domain and one label column".into()));
        }
        if count(|c| matches!(c, Column::Feature { .. })) == 0 {
            return Err(Error::Config("schema needs at least one feature column".into()));
        }
        for c in &self.columns {
            match c {
                Column::Feature {
                    name,
                    vocab_size,
                    encoding,
                } => {
                    let min = if *encoding == Encoding::Hash { 2 } else { 1 };
                    if *vocab_size < min {
                        return Err(Error::Config(format!(
                            "feature `{name}` needs vocab_size ≥ {min} for {encoding:?} encoding"
                        )));
                    }
                }
                Column::Domain { name, values } if values.is_empty() => {
                    return Err(Error::Config(format!("domain column `{name}` lists no values")));
                }
                _ => {}
            }
        }
        let mut names: Vec<&str> = self.columns.iter().map(Column::name).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("schema column names must be unique".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: CsvSchema = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1) as u64),
            message: e.message().to_string(),
        })?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        write_file(path, text.as_bytes())
    }

    /// Index-encoded schema matching a dataset, for export.
    pub fn for_dataset(ds: &Dataset) -> Self {
        let mut columns: Vec<Column> = ds
            .fields()
            .iter()
            .map(|f| Column::Feature {
                name: f.name.clone(),
                vocab_size: f.vocab_size,
                encoding: Encoding::Index,
            })
            .collect();
        columns.push(Column::Domain {
            name: "domain".into(),
            values: ds.domain_names().to_vec(),
        });
        columns.push(Column::Label { name: "label".into() });
        Self {
            format_version: SCHEMA_FORMAT_VERSION,
            columns,
        }
    }

    fn fields(&self) -> Vec<DatasetField> {
        self.columns
            .iter()
            .filter_map(|c| match c {
                Column::Feature { name, vocab_size, .. } => Some(DatasetField {
                    name: name.clone(),
                    vocab_size: *vocab_size,
                }),
                _ => None,
            })
            .collect()
    }

    fn domain_values(&self) -> &[String] {
        self.columns
            .iter()
            .find_map(|c| match c {
                Column::Domain { values, .. } => Some(values.as_slice()),
                _ => None,
            })
            .expect("validated schema has a domain column")
    }
}

/// A row that failed to parse in lenient mode.
#[derive(Clone, Debug, PartialEq)]
pub struct RejectedRow {
    pub line: u64,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct IngestReport {
    pub dataset: Dataset,
    pub rejected: Vec<RejectedRow>,
    /// Data lines seen, excluding the header.
    pub total_rows: usize,
}

pub fn hash_token(token: &str, vocab_size: usize) -> usize {
    if token.is_empty() {
        return OOV_BUCKET;
    }
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    1 + (h.finish() % (vocab_size as u64 - 1)) as usize
}

fn parse_row(schema: &CsvSchema, record: &csv::StringRecord) -> std::result::Result<Example, String> {
    if record.len() != schema.columns.len() {
        return Err(format!("expected {} columns, found {}", schema.columns.len(), record.len()));
    }
    let mut feature_ids = Vec::new();
    let mut domain_id = None;
    let mut label = None;
    for (col, token) in schema.columns.iter().zip(record.iter()) {
        match col {
            Column::Feature {
                name,
                vocab_size,
                encoding,
            } => feature_ids.push(match encoding {
                Encoding::Hash => hash_token(token, *vocab_size),
                Encoding::Index => match token.parse::<usize>() {
                    Ok(id) if id < *vocab_size => id,
                    Ok(id) => return Err(format!("feature `{name}` id {id} is not below vocab_size {vocab_size}")),
                    Err(_) => return Err(format!("feature `{name}` has non-integer id `{token}`")),
                },
            }),
            Column::Domain { name, values } => match values.iter().position(|v| v == token) {
                Some(d) => domain_id = Some(d),
                None => {
                    return Err(format!(
                        "unknown value `{token}` in domain column `{name}` (allowed: {})",
                        values.join(", ")
                    ))
                }
            },
            Column::Label { name } => {
                label = Some(match token {
                    "0" => 0,
                    "1" => 1,
                    _ => return Err(format!("label column `{name}` has token `{token}` (expected 0 or 1)")),
                })
            }
            Column::Ignore { .. } => {}
        }
    }
    Ok(Example {
        feature_ids,
        domain_id: domain_id.expect("validated schema has a domain column"),
        label: label.expect("validated schema has a label column"),
    })
}

/// Streams a CSV file into a dataset. Strict mode stops at the first bad row;
/// lenient mode collects bad rows in the report.
pub fn ingest_csv(path: &Path, schema: &CsvSchema, lenient: bool) -> Result<IngestReport> {
    schema.validate()?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        message,
    };
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let expected: Vec<String> = schema.columns.iter().map(|c| c.name().to_string()).collect();
    if header != expected {
        return Err(Error::SchemaMismatch { expected, found: header });
    }
    let mut examples = Vec::new();
    let mut rejected = Vec::new();
    let mut total_rows = 0;
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line() + 1;
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                total_rows += 1;
                let line = record.position().map_or(line, |p| p.line());
                match parse_row(schema, &record) {
                    Ok(ex) => examples.push(ex),
                    Err(message) if lenient => rejected.push(RejectedRow { line, message }),
                    Err(message) => return Err(parse_err(line, message)),
                }
            }
            Err(e) => {
                let line = e.position().map_or(line, |p| p.line());
                if !lenient {
                    return Err(parse_err(line, e.to_string()));
                }
                total_rows += 1;
                rejected.push(RejectedRow {
                    line,
                    message: e.to_string(),
                });
            }
        }
    }
    let dataset = Dataset::new(schema.fields(), schema.domain_values().to_vec(), examples)?;
    let counts = dataset
        .summary()
        .iter()
        .map(|s| format!("{}={}", s.name, s.examples))
        .collect::<Vec<_>>()
        .join(" ");
    log::info!("ingested {} rows from {} ({counts})", dataset.len(), path.display());
    Ok(IngestReport {
        dataset,
        rejected,
        total_rows,
    })
}

/// Writes a dataset as index-encoded CSV matching [`CsvSchema::for_dataset`].
pub fn export_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let schema = CsvSchema::for_dataset(ds);
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    w.write_record(schema.columns.iter().map(Column::name)).map_err(io)?;
    let mut row: Vec<String> = Vec::with_capacity(schema.columns.len());
    for ex in ds.examples() {
        row.clear();
        row.extend(ex.feature_ids.iter().map(usize::to_string));
        row.push(ds.domain_names()[ex.domain_id].clone());
        row.push(ex.label.to_string());
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_file(path, &bytes)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
