//! Trains Star+ on a synthetic preset, then reloads the checkpoint and
//! evaluates it on a single domain.
//!
//! Run with `cargo run --release --example train_and_evaluate`.

use starplus::cli::config::RunConfig;
use starplus::cli::train::{self, check_compatible, evaluate};
use starplus::{Architecture, Model, NormKind};

fn main() -> starplus::Result<()> {
    let out = tempfile::tempdir().map_err(|e| starplus::Error::io("temporary directory", e))?;

    let mut cfg = RunConfig::for_preset("company2", 30_000, 7);
    cfg.model.architecture = Architecture::StarPlus;
    cfg.model.norm = Some(NormKind::Partition);
    cfg.training.max_epochs = 3;
    cfg.batch.batch_size = 256;
    println!("{}", cfg.to_toml()?);

    let outcome = train::train(&cfg, out.path())?;
    for (epoch, loss) in outcome.epoch_losses.iter().enumerate() {
        println!("epoch {epoch}: mean train loss {loss:.5}");
    }
    if let Some(test) = &outcome.test {
        println!("{}", test.pretty_table("test split"));
    }

    // Reload from disk and score the first domain alone.
    let mut model = Model::load(&outcome.checkpoint, None)?;
    let ds = cfg.data.load(cfg.seed)?;
    check_compatible(&model, &ds)?;
    let d0 = ds.filter_domain(0);
    let report = evaluate(&mut model, &d0, 8192)?;
    println!("{}", report.pretty_table(&format!("all rows of {}", ds.domain_names()[0])));
    let log = std::fs::read_to_string(&outcome.metric_log).map_err(|e| starplus::Error::io(&outcome.metric_log, e))?;
    println!("{} metric records, last: {}", log.lines().count(), log.lines().last().unwrap_or(""));
    Ok(())
}
