//! Experiment grids: model variants × datasets, rendered as comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{FusionSpec, RunConfig};
use super::train::train_on;
use crate::data::csv::write_file;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::model::{Architecture, FusionKind};
use crate::norm::NormKind;

/// One model configuration in a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub architecture: Architecture,
    #[serde(default, deserialize_with = "fusion_name_or_table")]
    pub fusion: Option<FusionKind>,
    pub norm: NormKind,
}

fn fusion_name_or_table<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<FusionKind>, D::Error> {
    Option::<FusionSpec>::deserialize(d)?
        .map(|f| f.resolve())
        .transpose()
        .map_err(serde::de::Error::custom)
}

impl Variant {
    pub fn star(norm: NormKind) -> Self {
        Self {
            architecture: Architecture::Star,
            fusion: None,
            norm,
        }
    }

    pub fn star_plus(fusion: FusionKind, norm: NormKind) -> Self {
        Self {
            architecture: Architecture::StarPlus,
            fusion: Some(fusion),
            norm,
        }
    }

    pub fn label(&self) -> String {
        match &self.fusion {
            Some(f) => format!("{} {} {}", self.architecture.label(), f.label(), self.norm.label()),
            None => format!("{} {}", self.architecture.label(), self.norm.label()),
        }
    }

    /// Directory-safe name.
    pub fn slug(&self) -> String {
        self.label()
            .to_ascii_lowercase()
            .replace('+', "plus")
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect()
    }

    fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        cfg.model.architecture = self.architecture;
        cfg.model.fusion = self.fusion.clone().map(FusionSpec::Full);
        cfg.model.norm = Some(self.norm);
        cfg
    }
}

/// Star (partition norm) and Star+ with each fusion (layer norm).
pub fn fusion_variants() -> Vec<Variant> {
    let mut v = vec![Variant::star(NormKind::Partition)];
    for f in [
        FusionKind::add(),
        FusionKind::concat(),
        FusionKind::gate(),
        FusionKind::AdaptiveAdd,
    ] {
        v.push(Variant::star_plus(f, NormKind::Layer));
    }
    v
}

/// Star and Star+ (adaptive add) under each normalization.
pub fn norm_variants() -> Vec<Variant> {
    let order = [NormKind::None, NormKind::Layer, NormKind::Batch, NormKind::Partition];
    order
        .iter()
        .flat_map(|&n| [Variant::star(n), Variant::star_plus(FusionKind::AdaptiveAdd, n)])
        .collect()
}

/// Star and Star+ (adaptive add), both with layer norm.
pub fn domain_variants() -> Vec<Variant> {
    vec![
        Variant::star(NormKind::Layer),
        Variant::star_plus(FusionKind::AdaptiveAdd, NormKind::Layer),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TableKind {
    Fusion,
    Normalization,
    PerDomain,
}

impl TableKind {
    pub fn variants(self) -> Vec<Variant> {
        match self {
            TableKind::Fusion => fusion_variants(),
            TableKind::Normalization => norm_variants(),
            TableKind::PerDomain => domain_variants(),
        }
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            TableKind::Fusion => "table_fusion",
            TableKind::Normalization => "table_norm",
            TableKind::PerDomain => "table_domain_auc",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub dataset: String,
    pub variant: Variant,
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub cell: Cell,
    /// Test-split metrics, or the error code and message.
    pub outcome: std::result::Result<MetricReport, String>,
}

impl CellResult {
    pub fn report(&self) -> Option<&MetricReport> {
        self.outcome.as_ref().ok()
    }
}

/// Variants in first-seen order, duplicates removed.
pub fn dedup_variants(tables: &[TableKind]) -> Vec<Variant> {
    let mut out: Vec<Variant> = Vec::new();
    for t in tables {
        for v in t.variants() {
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}

/// Trains every variant on every dataset. Each cell writes under
/// `out/cells/<dataset>/<variant>/`; a failing cell is recorded and the rest continue.
pub fn run_grid(base: &RunConfig, datasets: &[(String, Dataset)], variants: &[Variant], out: &Path) -> Vec<CellResult> {
    let cells: Vec<(usize, Cell)> = datasets
        .iter()
        .enumerate()
        .flat_map(|(i, (name, _))| {
            variants.iter().map(move |v| {
                (
                    i,
                    Cell {
                        dataset: name.clone(),
                        variant: v.clone(),
                    },
                )
            })
        })
        .collect();
    cells
        .into_par_iter()
        .map(|(i, cell)| {
            let cfg = cell.variant.apply(base);
            let dir = out.join("cells").join(&cell.dataset).join(cell.variant.slug());
            let outcome = train_on(&cfg, &datasets[i].1, &dir)
                .and_then(|o| {
                    o.test
                        .ok_or_else(|| Error::Validation("no test split; lower train/valid fractions".into()))
                })
                .map_err(|e| format!("{}: {e}", e.code()));
            if let Err(e) = &outcome {
                log::error!("cell {} / {} failed: {e}", cell.dataset, cell.variant.label());
            }
            CellResult { cell, outcome }
        })
        .collect()
}

fn find<'a>(results: &'a [CellResult], dataset: &str, v: &Variant) -> Option<&'a CellResult> {
    results.iter().find(|r| r.cell.dataset == dataset && &r.cell.variant == v)
}

fn metric(results: &[CellResult], dataset: &str, v: &Variant, pick: fn(&MetricReport) -> Option<f64>) -> String {
    match find(results, dataset, v) {
        None => "-".into(),
        Some(r) => match r.report() {
            None => "ERR".into(),
            Some(rep) => pick(rep).map_or_else(|| "NA".into(), |x| format!("{x:.5}")),
        },
    }
}

/// Rows `Model, Fusion Type`; per dataset a `Loss, AUC` pair.
pub fn fusion_table(results: &[CellResult], datasets: &[String]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<6} {:<13}", "Model", "Fusion Type");
    for d in datasets {
        let _ = write!(s, " | {:^19}", d);
    }
    s.push('\n');
    let _ = write!(s, "{:<6} {:<13}", "", "");
    for _ in datasets {
        let _ = write!(s, " | {:>9} {:>9}", "Loss", "AUC");
    }
    s.push('\n');
    for v in fusion_variants() {
        let fusion = v.fusion.as_ref().map_or("-", FusionKind::label);
        let _ = write!(s, "{:<6} {:<13}", v.architecture.label(), fusion);
        for d in datasets {
            let _ = write!(
                s,
                " | {:>9} {:>9}",
                metric(results, d, &v, |r| r.overall.logloss),
                metric(results, d, &v, |r| r.overall.auc)
            );
        }
        s.push('\n');
    }
    s
}

/// Rows are normalizations; per dataset a `Star, Star+` AUC pair.
pub fn norm_table(results: &[CellResult], datasets: &[String]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<16}", "Type");
    for d in datasets {
        let _ = write!(s, " | {:^19}", d);
    }
    s.push('\n');
    let _ = write!(s, "{:<16}", "");
    for _ in datasets {
        let _ = write!(s, " | {:>9} {:>9}", "Star", "Star+");
    }
    s.push('\n');
    for pair in norm_variants().chunks(2) {
        let _ = write!(s, "{:<16}", pair[0].norm.label());
        for d in datasets {
            let _ = write!(
                s,
                " | {:>9} {:>9}",
                metric(results, d, &pair[0], |r| r.overall.auc),
                metric(results, d, &pair[1], |r| r.overall.auc)
            );
        }
        s.push('\n');
    }
    s
}

/// Per dataset, Star and Star+ rows with overall then per-domain AUC.
pub fn domain_table(results: &[CellResult], datasets: &[String]) -> String {
    let width = datasets
        .iter()
        .filter_map(|d| {
            domain_variants()
                .iter()
                .find_map(|v| find(results, d, v).and_then(CellResult::report))
                .map(|r| r.domains.len())
        })
        .max()
        .unwrap_or(0);
    let mut s = String::new();
    let _ = write!(s, "{:<10} {:<6} {:>9}", "", "", "all");
    for d in 1..=width {
        let _ = write!(s, " {:>9}", d);
    }
    s.push('\n');
    for d in datasets {
        for v in domain_variants() {
            let _ = write!(s, "{:<10} {:<6}", d, v.architecture.label());
            match find(results, d, &v).map(CellResult::report) {
                Some(Some(rep)) => {
                    let _ = write!(s, " {:>9}", rep.overall.auc.map_or("NA".into(), |x| format!("{x:.5}")));
                    for i in 0..width {
                        let cell = rep
                            .domains
                            .get(i)
                            .map_or("-".into(), |r| r.auc.map_or("NA".into(), |x| format!("{x:.5}")));
                        let _ = write!(s, " {:>9}", cell);
                    }
                }
                Some(None) => {
                    let _ = write!(s, " {:>9}", "ERR");
                }
                None => {
                    let _ = write!(s, " {:>9}", "-");
                }
            }
            s.push('\n');
        }
    }
    s
}

/// Long-form results: one line per (dataset, variant, domain row).
pub fn results_csv(results: &[CellResult]) -> String {
    let mut s = String::from("dataset,architecture,fusion,norm,status,domain,examples,positives,auc,logloss\n");
    for r in results {
        let v = &r.cell.variant;
        let head = format!(
            "{},{},{},{}",
            r.cell.dataset,
            v.architecture.label(),
            v.fusion.as_ref().map_or("-", FusionKind::label),
            v.norm.label()
        );
        match &r.outcome {
            Ok(rep) => {
                for row in rep.domains.iter().chain(std::iter::once(&rep.overall)) {
                    let _ = writeln!(
                        s,
                        "{head},ok,{},{},{},{},{}",
                        row.domain,
                        row.examples,
                        row.positives,
                        row.auc.map_or("NA".into(), |x| format!("{x:?}")),
                        row.logloss.map_or("NA".into(), |x| format!("{x:?}"))
                    );
                }
            }
            Err(e) => {
                let _ = writeln!(s, "{head},\"failed: {}\",,,,,", e.replace('"', "'"));
            }
        }
    }
    s
}

pub struct GridOutput {
    pub results: Vec<CellResult>,
    pub tables: BTreeMap<TableKind, String>,
}

/// Generates each dataset once, runs the union of the tables' variants and
/// writes `results.csv` plus one text file per table under `out`.
pub fn run_tables(base: &RunConfig, presets: &[String], tables: &[TableKind], out: &Path) -> Result<GridOutput> {
    let mut datasets = Vec::new();
    for p in presets {
        let mut data = base.data.clone();
        data.preset = Some(p.clone());
        data.synthetic = None;
        data.csv = None;
        data.schema = None;
        data.cache = None;
        datasets.push((p.clone(), data.load(base.seed)?));
    }
    run_tables_on(base, datasets, tables, out)
}

pub fn run_tables_on(
    base: &RunConfig,
    datasets: Vec<(String, Dataset)>,
    tables: &[TableKind],
    out: &Path,
) -> Result<GridOutput> {
    let variants = dedup_variants(tables);
    let names: Vec<String> = datasets.iter().map(|(n, _)| n.clone()).collect();
    let results = run_grid(base, &datasets, &variants, out);
    write_file(&out.join("results.csv"), results_csv(&results).as_bytes())?;
    let mut rendered = BTreeMap::new();
    for &t in tables {
        let text = match t {
            TableKind::Fusion => fusion_table(&results, &names),
            TableKind::Normalization => norm_table(&results, &names),
            TableKind::PerDomain => domain_table(&results, &names),
        };
        write_file(&out.join(format!("{}.txt", t.file_stem())), text.as_bytes())?;
        rendered.insert(t, text);
    }
    Ok(GridOutput {
        results,
        tables: rendered,
    })
}

/// Custom grid file: `datasets = [...]` and `[[variants]]` tables.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub datasets: Vec<String>,
    pub variants: Vec<Variant>,
}

impl GridFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let g: GridFile = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
        if g.datasets.is_empty() || g.variants.is_empty() {
            return Err(Error::Config(format!("{}: grid needs datasets and variants", path.display())));
        }
        Ok(g)
    }
}

/// Rows are variants; per dataset a `Loss, AUC` pair.
pub fn variant_table(results: &[CellResult], datasets: &[String], variants: &[Variant]) -> String {
    let width = variants.iter().map(|v| v.label().len()).max().unwrap_or(5).max(5);
    let mut s = String::new();
    let _ = write!(s, "{:<width$}", "Model");
    for d in datasets {
        let _ = write!(s, " | {:^19}", d);
    }
    s.push('\n');
    let _ = write!(s, "{:<width$}", "");
    for _ in datasets {
        let _ = write!(s, " | {:>9} {:>9}", "Loss", "AUC");
    }
    s.push('\n');
    for v in variants {
        let _ = write!(s, "{:<width$}", v.label());
        for d in datasets {
            let _ = write!(
                s,
                " | {:>9} {:>9}",
                metric(results, d, v, |r| r.overall.logloss),
                metric(results, d, v, |r| r.overall.auc)
            );
        }
        s.push('\n');
    }
    s
}
