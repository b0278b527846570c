//! Run configuration: a versioned TOML tree plus dotted-key overrides.
//!
//! ```toml
//! format_version = 1
//! seed = 42
//! output_dir = "runs/company1"
//!
//! [data]
//! preset = "company1"
//! n = 100000
//!
//! [model]
//! architecture = "star_plus"
//! fusion = "adaptive_add"
//! norm = "layer"
//!
//! [adam]
//! learning_rate = 0.001
//!
//! [batch]
//! batch_size = 2000
//!
//! [training]
//! max_epochs = 20
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::csv::{ingest_csv, CsvSchema};
use crate::data::{BatchPlan, BatchStrategy, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::{Architecture, FusionKind, ModelConfig};
use crate::nn::AdamConfig;
use crate::norm::{NormKind, NormOptions};

pub const RUN_FORMAT_VERSION: u32 = 1;
/// Environment variable naming the root for relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "STARPLUS_OUT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: u32,
    /// Drives model init, data generation and batch order. No default.
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub data: DataSource,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub batch: BatchSection,
    #[serde(default)]
    pub training: TrainingSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("run")
}

/// Exactly one of `preset`, `synthetic`, `csv` (+ `schema`) or `cache`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSource {
    pub preset: Option<String>,
    pub synthetic: Option<SyntheticSpec>,
    /// Examples to generate for `preset` / `synthetic`.
    pub n: usize,
    pub csv: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    /// Collect malformed CSV rows instead of failing.
    pub lenient: bool,
}

impl Default for DataSource {
    fn default() -> Self {
        Self {
            preset: None,
            synthetic: None,
            n: 100_000,
            csv: None,
            schema: None,
            cache: None,
            lenient: false,
        }
    }
}

impl DataSource {
    fn validate(&self) -> Result<()> {
        let sources = [
            self.preset.is_some(),
            self.synthetic.is_some(),
            self.csv.is_some(),
            self.cache.is_some(),
        ];
        match sources.iter().filter(|s| **s).count() {
            1 => {}
            0 => {
                return Err(Error::Config(
                    "no data source: set data.preset, data.synthetic, data.csv or data.cache".into(),
                ))
            }
            _ => {
                return Err(Error::Config(
                    "data.preset, data.synthetic, data.csv and data.cache are mutually exclusive".into(),
                ))
            }
        }
        if let Some(p) = &self.preset {
            SyntheticSpec::preset(p, 0)?;
        }
        if let Some(s) = &self.synthetic {
            s.validate()?;
        }
        if self.csv.is_some() != self.schema.is_some() {
            return Err(Error::Config("data.csv and data.schema must be given together".into()));
        }
        for p in [&self.csv, &self.schema, &self.cache].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("data path {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Synthetic spec for generated sources; presets take the run seed.
    pub fn synthetic_spec(&self, seed: u64) -> Result<Option<SyntheticSpec>> {
        match (&self.preset, &self.synthetic) {
            (Some(p), _) => Ok(Some(SyntheticSpec::preset(p, seed)?)),
            (None, Some(s)) => Ok(Some(s.clone())),
            _ => Ok(None),
        }
    }

    pub fn load(&self, seed: u64) -> Result<Dataset> {
        self.validate()?;
        if let Some(spec) = self.synthetic_spec(seed)? {
            return spec.generate(self.n);
        }
        if let Some(cache) = &self.cache {
            return Dataset::load_cache(cache);
        }
        let csv = self.csv.as_ref().expect("validated");
        let schema = CsvSchema::load(self.schema.as_ref().expect("validated"))?;
        let report = ingest_csv(csv, &schema, self.lenient)?;
        for r in &report.rejected {
            log::warn!("{}: line {}: {}", csv.display(), r.line, r.message);
        }
        Ok(report.dataset)
    }

    /// Short name used in tables.
    pub fn label(&self) -> String {
        if let Some(p) = &self.preset {
            p.clone()
        } else if self.synthetic.is_some() {
            "synthetic".into()
        } else {
            let path = self.csv.as_ref().or(self.cache.as_ref());
            path.and_then(|p| p.file_stem())
                .map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
        }
    }
}

/// Fusion by name (`"gate"`) or as a full table (`{ kind = "gate", gate_hidden = 4 }`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FusionSpec {
    Name(String),
    Full(FusionKind),
}

impl FusionSpec {
    pub fn resolve(&self) -> Result<FusionKind> {
        match self {
            FusionSpec::Name(n) => n.parse(),
            FusionSpec::Full(f) => Ok(f.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: Architecture,
    /// Star+ only; defaults to adaptive add.
    pub fusion: Option<FusionSpec>,
    /// Defaults to partition for Star, layer otherwise.
    pub norm: Option<NormKind>,
    pub norm_options: NormOptions,
    pub tower_widths: Vec<usize>,
    pub tower_output_dim: usize,
    pub domain_embedding_dim: usize,
    /// Embedding width of every feature field.
    pub embedding_dim: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            architecture: Architecture::StarPlus,
            fusion: None,
            norm: None,
            norm_options: NormOptions::default(),
            tower_widths: vec![64, 32],
            tower_output_dim: 16,
            domain_embedding_dim: 8,
            embedding_dim: 8,
        }
    }
}

impl ModelSpec {
    pub fn norm_kind(&self) -> NormKind {
        self.norm.unwrap_or(match self.architecture {
            Architecture::Star => NormKind::Partition,
            _ => NormKind::Layer,
        })
    }

    pub fn fusion_kind(&self) -> Result<Option<FusionKind>> {
        match (&self.fusion, self.architecture) {
            (Some(f), _) => f.resolve().map(Some),
            (None, Architecture::StarPlus) => Ok(Some(FusionKind::AdaptiveAdd)),
            (None, _) => Ok(None),
        }
    }

    pub fn to_model_config(&self, dataset: &Dataset, seed: u64) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            num_domains: dataset.num_domains(),
            fields: dataset.field_specs(self.embedding_dim),
            architecture: self.architecture,
            tower_widths: self.tower_widths.clone(),
            tower_output_dim: self.tower_output_dim,
            domain_embedding_dim: self.domain_embedding_dim,
            norm: self.norm_kind(),
            norm_options: self.norm_options,
            fusion: self.fusion_kind()?,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchSection {
    pub batch_size: usize,
    pub strategy: BatchStrategy,
    pub max_batches_per_epoch: Option<usize>,
}

impl Default for BatchSection {
    fn default() -> Self {
        let p = BatchPlan::default();
        Self {
            batch_size: p.batch_size,
            strategy: p.strategy,
            max_batches_per_epoch: p.max_batches_per_epoch,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub max_epochs: usize,
    /// Stop once a validation pass improves AUC by less than `min_delta`.
    pub early_stopping: bool,
    pub min_delta: f64,
    /// Epochs between validation passes.
    pub eval_every: usize,
    pub eval_batch_size: usize,
    pub train_fraction: f64,
    pub valid_fraction: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            max_epochs: 20,
            early_stopping: true,
            min_delta: 1e-4,
            eval_every: 1,
            eval_batch_size: 8192,
            train_fraction: 0.8,
            valid_fraction: 0.1,
        }
    }
}

impl RunConfig {
    /// Minimal config for a preset; everything else at defaults.
    pub fn for_preset(preset: &str, n: usize, seed: u64) -> Self {
        Self {
            format_version: RUN_FORMAT_VERSION,
            seed,
            output_dir: default_output_dir(),
            data: DataSource {
                preset: Some(preset.into()),
                n,
                ..DataSource::default()
            },
            model: ModelSpec::default(),
            adam: AdamConfig::default(),
            batch: BatchSection::default(),
            training: TrainingSection::default(),
        }
    }

    /// Parses a TOML document after applying `key=value` overrides.
    pub fn from_toml_with(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        Self::from_toml_edited(text, overrides, |_| {})
    }

    /// As [`Self::from_toml_with`], with `edit` applied to the raw table last.
    pub fn from_toml_edited(
        text: &str,
        overrides: &[(String, String)],
        edit: impl FnOnce(&mut toml::Table),
    ) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("run config: {}", e.message())))?;
        for (k, v) in overrides {
            set_dotted(&mut table, k, parse_value(v))?;
        }
        edit(&mut table);
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("run config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or starts from an empty document) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        Self::load_edited(path, overrides, |_| {})
    }

    pub fn load_edited(
        path: Option<&Path>,
        overrides: &[(String, String)],
        edit: impl FnOnce(&mut toml::Table),
    ) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => format!("format_version = {RUN_FORMAT_VERSION}\n"),
        };
        Self::from_toml_edited(&text, overrides, edit).map_err(|e| match (e, path) {
            (Error::Config(m), Some(p)) if m.contains("missing field `seed`") => {
                Error::Config(format!("{}: seed is mandatory", p.display()))
            }
            (Error::Config(m), None) if m.contains("missing field `seed`") => {
                Error::Config("seed is mandatory (pass --seed or a config file)".into())
            }
            (e, _) => e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != RUN_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "run config format_version {} is not supported (expected {RUN_FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.data.validate()?;
        self.adam.validate()?;
        self.batch_plan().validate()?;
        self.model.norm_options.validate()?;
        if let Some(f) = self.model.fusion_kind()? {
            f.validate()?;
        }
        let t = &self.training;
        if t.max_epochs == 0 || t.eval_every == 0 || t.eval_batch_size == 0 {
            return Err(Error::Config(
                "training.max_epochs, eval_every and eval_batch_size must be positive".into(),
            ));
        }
        if !(t.train_fraction > 0.0 && t.valid_fraction >= 0.0 && t.train_fraction + t.valid_fraction <= 1.0) {
            return Err(Error::Config("train/valid fractions must be positive and sum to at most 1".into()));
        }
        // Architecture/fusion compatibility does not depend on the data.
        let probe = ModelConfig {
            num_domains: 2,
            fields: vec![crate::model::FieldSpec {
                name: "probe".into(),
                vocab_size: 1,
                embedding_dim: self.model.embedding_dim.max(1),
            }],
            architecture: self.model.architecture,
            tower_widths: self.model.tower_widths.clone(),
            tower_output_dim: self.model.tower_output_dim,
            domain_embedding_dim: self.model.domain_embedding_dim,
            norm: self.model.norm_kind(),
            norm_options: self.model.norm_options,
            fusion: self.model.fusion_kind()?,
            seed: self.seed,
        };
        probe.validate()?;
        if self.model.embedding_dim == 0 {
            return Err(Error::Config("model.embedding_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn batch_plan(&self) -> BatchPlan {
        BatchPlan {
            batch_size: self.batch.batch_size,
            strategy: self.batch.strategy,
            seed: self.seed,
            max_batches_per_epoch: self.batch.max_batches_per_epoch,
        }
    }

    /// `output_dir`, resolved against `$STARPLUS_OUT` when relative.
    pub fn resolved_output(&self) -> PathBuf {
        resolve_output(&self.output_dir)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn resolve_output(dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        return dir.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

/// TOML literal if it parses as one, otherwise a bare string.
pub fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Splits `a.b.c=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::Config(format!("override `{s}` is not of the form key=value"))),
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut t = table;
    for p in parts {
        let entry = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}
