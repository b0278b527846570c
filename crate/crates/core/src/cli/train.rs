//! Training loop, evaluation and the metric log.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use crate::data::csv::write_file;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{report_with_names, MetricReport, MetricRow};
use crate::model::Model;
use crate::norm::Mode;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRIC_LOG_FILE: &str = "metrics.jsonl";
pub const RUN_CONFIG_FILE: &str = "run.toml";

/// Click probabilities for every example, in inference mode, in chunks.
pub fn predict_dataset(model: &mut Model, ds: &Dataset, chunk: usize) -> Result<Vec<f64>> {
    let previous = model.mode();
    model.set_mode(Mode::Inference);
    let mut out = Vec::with_capacity(ds.len());
    let idx: Vec<usize> = (0..ds.len()).collect();
    for rows in idx.chunks(chunk.max(1)) {
        out.extend_from_slice(model.predict(&ds.batch(rows))?.as_slice());
    }
    model.set_mode(previous);
    Ok(out)
}

pub fn evaluate(model: &mut Model, ds: &Dataset, chunk: usize) -> Result<MetricReport> {
    if ds.is_empty() {
        return Err(Error::Validation("cannot evaluate an empty dataset".into()));
    }
    let probs = predict_dataset(model, ds, chunk)?;
    report_with_names(&probs, &ds.labels(), &ds.domains(), ds.domain_names())
}

/// Rejects a dataset whose domains or fields differ from the model's.
pub fn check_compatible(model: &Model, ds: &Dataset) -> Result<()> {
    let cfg = model.config();
    let mut expected = Vec::new();
    let mut found = Vec::new();
    if cfg.num_domains != ds.num_domains() {
        expected.push(format!("num_domains={}", cfg.num_domains));
        found.push(format!("num_domains={}", ds.num_domains()));
    }
    let n = cfg.fields.len().max(ds.fields().len());
    for i in 0..n {
        let e = cfg.fields.get(i).map(|f| format!("{}(vocab {})", f.name, f.vocab_size));
        let g = ds.fields().get(i).map(|f| format!("{}(vocab {})", f.name, f.vocab_size));
        if e != g {
            expected.push(e.unwrap_or_else(|| "<none>".into()));
            found.push(g.unwrap_or_else(|| "<none>".into()));
        }
    }
    if expected.is_empty() {
        Ok(())
    } else {
        Err(Error::SchemaMismatch { expected, found })
    }
}

#[derive(Serialize)]
struct LogRecord<'a> {
    epoch: usize,
    step: u64,
    split: &'a str,
    train_loss: Option<f64>,
    overall: &'a MetricRow,
    domains: &'a [MetricRow],
}

/// Append-only JSON-lines metric log.
pub struct MetricLog {
    path: PathBuf,
}

impl MetricLog {
    pub fn new(path: PathBuf) -> Self {
        Self { path }
    }

    pub fn append(&self, epoch: usize, step: u64, split: &str, train_loss: Option<f64>, r: &MetricReport) -> Result<()> {
        let line = serde_json::to_string(&LogRecord {
            epoch,
            step,
            split,
            train_loss,
            overall: &r.overall,
            domains: &r.domains,
        })
        .map_err(|e| Error::Numeric(format!("metric log: {e}")))?;
        if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        writeln!(f, "{line}").map_err(|e| Error::io(&self.path, e))
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub checkpoint: PathBuf,
    pub metric_log: PathBuf,
    pub epochs: usize,
    pub steps: u64,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss of every optimization step.
    pub step_losses: Vec<f64>,
    pub valid: Option<MetricReport>,
    pub test: Option<MetricReport>,
}

/// Loads data from the config, then trains; see [`train_on`].
pub fn train(cfg: &RunConfig, out: &Path) -> Result<TrainOutcome> {
    let ds = cfg.data.load(cfg.seed)?;
    train_on(cfg, &ds, out)
}

/// Splits `ds`, trains with early stopping on validation AUC, writes
/// `checkpoint.bin`, `metrics.jsonl` and `run.toml` under `out`.
pub fn train_on(cfg: &RunConfig, ds: &Dataset, out: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Validation("training dataset is empty".into()));
    }
    let t = cfg.training;
    let (train, valid, test) = ds.split(t.train_fraction, t.valid_fraction)?;
    if train.len() < 2 {
        return Err(Error::Validation(format!("training split has {} example(s)", train.len())));
    }
    let mut model = Model::new(cfg.model.to_model_config(ds, cfg.seed)?)?;
    write_file(&out.join(RUN_CONFIG_FILE), cfg.to_toml()?.as_bytes())?;
    let log = MetricLog::new(out.join(METRIC_LOG_FILE));
    let plan = cfg.batch_plan();

    let mut step = 0u64;
    let mut epoch_losses = Vec::new();
    let mut step_losses = Vec::new();
    let mut previous_auc: Option<f64> = None;
    let mut valid_report = None;
    let mut epochs = 0;
    for epoch in 0..t.max_epochs {
        model.set_mode(Mode::Training);
        let schedule = plan.schedule(&train, epoch as u64)?;
        if schedule.is_empty() {
            return Err(Error::Validation("batch schedule is empty".into()));
        }
        let mut total = 0.0;
        for rows in &schedule {
            step += 1;
            let loss = model.train_step(&train.batch(rows), &cfg.adam).map_err(|e| match e {
                Error::Numeric(m) => Error::Numeric(format!("epoch {epoch} step {step}: {m}")),
                other => other,
            })?;
            total += loss;
            step_losses.push(loss);
        }
        let mean = total / schedule.len() as f64;
        epoch_losses.push(mean);
        epochs = epoch + 1;
        log::info!("epoch {epochs}: mean train loss {mean:.6}");

        if valid.is_empty() || (epoch + 1) % t.eval_every != 0 {
            continue;
        }
        let report = evaluate(&mut model, &valid, t.eval_batch_size)?;
        log.append(epochs, step, "valid", Some(mean), &report)?;
        let auc = report.overall.auc;
        valid_report = Some(report);
        if let (true, Some(prev), Some(cur)) = (t.early_stopping, previous_auc, auc) {
            if cur - prev < t.min_delta {
                log::info!("early stop after epoch {epochs}: valid AUC {cur:.6} vs {prev:.6}");
                break;
            }
        }
        if auc.is_some() {
            previous_auc = auc;
        }
    }
    model.set_mode(Mode::Inference);
    let test_report = if test.is_empty() {
        None
    } else {
        let r = evaluate(&mut model, &test, t.eval_batch_size)?;
        log.append(epochs, step, "test", None, &r)?;
        Some(r)
    };
    let checkpoint = out.join(CHECKPOINT_FILE);
    model.save(&checkpoint)?;
    Ok(TrainOutcome {
        model,
        checkpoint,
        metric_log: out.join(METRIC_LOG_FILE),
        epochs,
        steps: step,
        epoch_losses,
        step_losses,
        valid: valid_report,
        test: test_report,
    })
}
