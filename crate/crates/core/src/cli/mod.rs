//! Command-line front end: `gen`, `train`, `eval`, `experiment`, `gradcheck`.
//!
//! Every command reads a [`RunConfig`] (optional TOML file, then `--set
//! key=value` overrides, then dedicated flags). Relative output directories
//! are placed under `$STARPLUS_OUT` when it is set. Failures print one line,
//! `error[E_CODE]: message`, and exit with 1 (validation), 2 (runtime) or
//! 3 (numeric).

pub mod config;
pub mod experiment;
pub mod gradcheck;
pub mod train;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::RunConfig;

use crate::data::csv::{export_csv, ingest_csv, write_file, CsvSchema};
use crate::data::{Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::{Architecture, FusionKind, Model};
use crate::norm::NormKind;
use config::{parse_override, resolve_output};
use experiment::{GridFile, TableKind};
use gradcheck::{Case, Fault, GradcheckSetup};

#[derive(Debug, Parser)]
#[command(name = "starplus", version, about = "Star / Star+ multi-domain CTR models")]
pub struct Cli {
    /// Log progress to stderr (otherwise RUST_LOG decides).
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (CSV, schema and binary cache).
    Gen(RunArgs),
    /// Train a model and write a checkpoint and metric log.
    Train(RunArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Train a grid of models and print comparison tables.
    Experiment(ExperimentArgs),
    /// Finite-difference check of the full model's gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct RunArgs {
    /// Run configuration file (TOML).
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override any config key, e.g. `--set adam.learning_rate=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Synthetic preset: company1, company2 or alicpp.
    #[arg(long)]
    pub preset: Option<String>,
    /// Number of examples to generate.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub architecture: Option<String>,
    #[arg(long)]
    pub fusion: Option<String>,
    #[arg(long)]
    pub norm: Option<String>,
    /// Maximum training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

impl RunArgs {
    pub fn load(&self) -> Result<RunConfig> {
        self.load_with_fallback(None)
    }

    /// `fallback` names a preset used when nothing else selects a data source.
    pub fn load_with_fallback(&self, fallback: Option<&str>) -> Result<RunConfig> {
        let mut ov = self
            .overrides
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>>>()?;
        let quoted = |s: &str| format!("{:?}", s);
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                ov.push((k.to_string(), v));
            }
        };
        push("seed", self.seed.map(|s| s.to_string()));
        push("output_dir", self.out.as_ref().map(|p| quoted(&p.to_string_lossy())));
        push("data.preset", self.preset.as_deref().map(quoted));
        push("data.n", self.n.map(|n| n.to_string()));
        push("model.architecture", self.architecture.as_deref().map(|a| {
            quoted(&a.to_ascii_lowercase().replace('-', "_").replace('+', "_plus"))
        }));
        push("model.fusion", self.fusion.as_deref().map(quoted));
        push("model.norm", self.norm.as_deref().map(|n| quoted(&n.to_ascii_lowercase())));
        push("training.max_epochs", self.epochs.map(|e| e.to_string()));
        push("batch.batch_size", self.batch_size.map(|b| b.to_string()));
        push("adam.learning_rate", self.lr.map(|l| format!("{l:?}")));
        // --preset replaces whatever data source the file names.
        let preset = self.preset.is_some();
        RunConfig::load_edited(self.config.as_deref(), &ov, |t| {
            if let (true, Some(toml::Value::Table(data))) = (preset, t.get_mut("data")) {
                for k in ["synthetic", "csv", "schema", "cache"] {
                    data.remove(k);
                }
            }
            if let Some(f) = fallback {
                let data = t
                    .entry("data")
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                if let toml::Value::Table(data) = data {
                    if !["preset", "synthetic", "csv", "cache"].iter().any(|k| data.contains_key(*k)) {
                        data.insert("preset".into(), toml::Value::String(f.into()));
                    }
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Run configuration whose data section (and split fractions) to use.
    #[arg(long, short, conflicts_with_all = ["dataset", "csv"])]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Binary dataset cache written by `gen`.
    #[arg(long, conflicts_with = "csv")]
    pub dataset: Option<PathBuf>,
    #[arg(long, requires = "schema")]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Defaults to `test` with --config and `all` otherwise.
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Restrict to one domain, by name.
    #[arg(long)]
    pub domain: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum TableArg {
    Fusion,
    Norm,
    Domain,
}

impl From<TableArg> for TableKind {
    fn from(t: TableArg) -> Self {
        match t {
            TableArg::Fusion => TableKind::Fusion,
            TableArg::Norm => TableKind::Normalization,
            TableArg::Domain => TableKind::PerDomain,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Tables to produce; all three when omitted.
    #[arg(long = "table", value_enum)]
    pub tables: Vec<TableArg>,
    /// Comma-separated presets (the table columns).
    #[arg(long, value_delimiter = ',', default_values_t = SyntheticSpec::PRESETS.map(String::from))]
    pub presets: Vec<String>,
    /// Custom grid file instead of the built-in tables.
    #[arg(long, conflicts_with = "tables")]
    pub grid: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum FaultArg {
    SignFlip,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// Check every architecture × fusion × normalization combination.
    #[arg(long, conflicts_with_all = ["architecture", "fusion", "norm"])]
    pub all: bool,
    #[arg(long, default_value = "star_plus")]
    pub architecture: String,
    #[arg(long)]
    pub fusion: Option<String>,
    #[arg(long, default_value = "layer")]
    pub norm: String,
    #[arg(long, default_value_t = 3)]
    pub domains: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Test fixture: corrupt the backward pass.
    #[arg(long, value_enum, hide = true)]
    pub inject_fault: Option<FaultArg>,
}

/// Parses arguments, runs the command and maps errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[E_USAGE]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let mut stdout = std::io::stdout().lock();
    match run(cli.command, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.code());
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn main() -> ExitCode {
    main_with_args(std::env::args_os())
}

/// Runs one command, writing human-readable output to `out`.
pub fn run(command: Command, out: &mut dyn std::io::Write) -> Result<()> {
    let text = match command {
        Command::Gen(a) => cmd_gen(&a.load()?)?,
        Command::Train(a) => cmd_train(&a.load()?)?,
        Command::Eval(a) => cmd_eval(&a)?,
        Command::Experiment(a) => cmd_experiment(&a)?,
        Command::Gradcheck(a) => cmd_gradcheck(&a)?,
    };
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

/// Per-domain share and CTR next to the generator targets.
pub fn generation_table(ds: &Dataset, spec: &SyntheticSpec) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<8} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "domain", "examples", "share %", "target", "ctr %", "target"
    );
    for (i, row) in ds.summary().iter().enumerate() {
        let ctr = if row.ctr.is_nan() {
            "NA".to_string()
        } else {
            format!("{:.2}", 100.0 * row.ctr)
        };
        let _ = writeln!(
            s,
            "{:<8} {:>9} {:>9.2} {:>9.2} {:>9} {:>9.2}",
            row.name,
            row.examples,
            100.0 * row.share,
            100.0 * spec.domain_shares[i],
            ctr,
            100.0 * spec.target_ctrs[i]
        );
    }
    s
}

/// Writes `data.csv`, `schema.toml` and `dataset.bin`; returns the share/CTR table.
pub fn cmd_gen(cfg: &RunConfig) -> Result<String> {
    let spec = cfg
        .data
        .synthetic_spec(cfg.seed)?
        .ok_or_else(|| Error::Config("gen needs data.preset or data.synthetic".into()))?;
    let ds = spec.generate(cfg.data.n)?;
    let out = cfg.resolved_output();
    export_csv(&ds, &out.join("data.csv"))?;
    CsvSchema::for_dataset(&ds).save(&out.join("schema.toml"))?;
    ds.save_cache(&out.join("dataset.bin"))?;
    Ok(format!(
        "{}wrote {} examples to {}\n",
        generation_table(&ds, &spec),
        ds.len(),
        out.display()
    ))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let out = cfg.resolved_output();
    let o = train::train(cfg, &out)?;
    let mut s = format!(
        "{}: {} epoch(s), {} step(s), train loss {:.6} -> {:.6}\n",
        o.model.config().label(),
        o.epochs,
        o.steps,
        o.epoch_losses.first().copied().unwrap_or(f64::NAN),
        o.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    if let Some(r) = &o.test {
        s.push_str(&r.pretty_table("test"));
        write_file(&out.join("report_test.csv"), r.to_csv("test").as_bytes())?;
    }
    let _ = writeln!(s, "checkpoint: {}", o.checkpoint.display());
    let _ = writeln!(s, "metric log: {}", o.metric_log.display());
    Ok(s)
}

fn load_eval_data(a: &EvalArgs) -> Result<(Dataset, String)> {
    if let Some(c) = &a.config {
        let ov = a.overrides.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>>>()?;
        let cfg = RunConfig::load(Some(c), &ov)?;
        let ds = cfg.data.load(cfg.seed)?;
        let (train, valid, test) = ds.split(cfg.training.train_fraction, cfg.training.valid_fraction)?;
        return Ok(match a.split.unwrap_or(SplitArg::Test) {
            SplitArg::Train => (train, "train".into()),
            SplitArg::Valid => (valid, "valid".into()),
            SplitArg::Test => (test, "test".into()),
            SplitArg::All => (ds, "all".into()),
        });
    }
    let ds = match (&a.dataset, &a.csv, &a.schema) {
        (Some(p), _, _) => Dataset::load_cache(p)?,
        (None, Some(csv), Some(schema)) => ingest_csv(csv, &CsvSchema::load(schema)?, false)?.dataset,
        _ => return Err(Error::Config("eval needs --config, --dataset or --csv with --schema".into())),
    };
    match a.split {
        None | Some(SplitArg::All) => Ok((ds, "all".into())),
        Some(_) => Err(Error::Config("--split needs --config for the split fractions".into())),
    }
}

pub fn cmd_eval(a: &EvalArgs) -> Result<String> {
    let mut model = Model::load(&a.checkpoint, None)?;
    let (mut ds, mut split) = load_eval_data(a)?;
    train::check_compatible(&model, &ds)?;
    if let Some(name) = &a.domain {
        let d = ds.domain_names().iter().position(|n| n == name).ok_or_else(|| {
            Error::Validation(format!(
                "unknown domain `{name}` (allowed: {})",
                ds.domain_names().join(", ")
            ))
        })?;
        ds = ds.filter_domain(d);
        split = format!("{split}:{name}");
    }
    let report = train::evaluate(&mut model, &ds, 8192)?;
    let out = resolve_output(a.out.as_deref().unwrap_or(Path::new("eval")));
    let file = out.join(format!("report_{}.csv", split.replace(':', "_")));
    write_file(&file, report.to_csv(&split).as_bytes())?;
    Ok(format!("{}report: {}\n", report.pretty_table(&split), file.display()))
}

pub fn cmd_experiment(a: &ExperimentArgs) -> Result<String> {
    let fallback = match &a.grid {
        Some(_) => None,
        None => a.presets.first().map(String::as_str),
    };
    let base = a.run.load_with_fallback(fallback.or(Some("company1")))?;
    let out = base.resolved_output();
    let mut s = String::new();
    if let Some(grid_path) = &a.grid {
        let grid = GridFile::load(grid_path)?;
        let mut datasets = Vec::new();
        for p in &grid.datasets {
            let mut data = base.data.clone();
            data.preset = Some(p.clone());
            data.synthetic = None;
            datasets.push((p.clone(), data.load(base.seed)?));
        }
        let results = experiment::run_grid(&base, &datasets, &grid.variants, &out);
        write_file(&out.join("results.csv"), experiment::results_csv(&results).as_bytes())?;
        let table = experiment::variant_table(&results, &grid.datasets, &grid.variants);
        write_file(&out.join("table_grid.txt"), table.as_bytes())?;
        s.push_str(&table);
        append_failures(&mut s, &results);
        return Ok(s);
    }
    let tables: Vec<TableKind> = if a.tables.is_empty() {
        vec![TableKind::Fusion, TableKind::Normalization, TableKind::PerDomain]
    } else {
        a.tables.iter().map(|&t| t.into()).collect()
    };
    let g = experiment::run_tables(&base, &a.presets, &tables, &out)?;
    for (kind, text) in &g.tables {
        let title = match kind {
            TableKind::Fusion => "Fusion strategies (test Loss / AUC)",
            TableKind::Normalization => "Normalization (test AUC)",
            TableKind::PerDomain => "Per-domain test AUC",
        };
        let _ = writeln!(s, "{title}\n{text}");
    }
    append_failures(&mut s, &g.results);
    let _ = writeln!(s, "results: {}", out.join("results.csv").display());
    Ok(s)
}

fn append_failures(s: &mut String, results: &[experiment::CellResult]) {
    for r in results {
        if let Err(e) = &r.outcome {
            let _ = writeln!(s, "FAILED {} / {}: {e}", r.cell.dataset, r.cell.variant.label());
        }
    }
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<String> {
    let cases = if a.all {
        gradcheck::all_cases()
    } else {
        let architecture: Architecture = a.architecture.parse()?;
        let fusion = match (architecture, &a.fusion) {
            (_, Some(f)) => Some(f.parse::<FusionKind>()?),
            (Architecture::StarPlus, None) => Some(FusionKind::gate()),
            _ => None,
        };
        vec![Case {
            architecture,
            fusion,
            norm: a.norm.parse::<NormKind>()?,
        }]
    };
    let setup = GradcheckSetup {
        num_domains: a.domains,
        batch_size: a.batch_size,
        seed: a.seed,
        tolerance: a.tolerance,
        ..GradcheckSetup::default()
    };
    let fault = match a.inject_fault {
        Some(FaultArg::SignFlip) => Fault::SignFlip,
        None => Fault::None,
    };
    let mut s = String::new();
    let mut failed = 0;
    for case in &cases {
        let config = gradcheck::small_config(case, setup.num_domains, setup.seed);
        config.validate()?;
        let report = gradcheck::check_case(case, &setup, fault)?;
        if !report.passed() {
            failed += 1;
        }
        let _ = writeln!(s, "{case}: {report}");
    }
    if failed > 0 {
        let _ = std::io::stdout().write_all(s.as_bytes());
        return Err(Error::Numeric(format!(
            "{failed} of {} gradient check(s) failed",
            cases.len()
        )));
    }
    Ok(s)
}
