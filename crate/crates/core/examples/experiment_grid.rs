//! Runs the fusion and normalization comparison grids on two small presets.
//!
//! Run with `cargo run --release --example experiment_grid`.

use starplus::cli::config::RunConfig;
use starplus::cli::experiment::{self, TableKind, Variant};
use starplus::{FusionKind, NormKind};

fn main() -> starplus::Result<()> {
    let out = tempfile::tempdir().map_err(|e| starplus::Error::io("temporary directory", e))?;
    let mut base = RunConfig::for_preset("company1", 8_000, 3);
    base.training.max_epochs = 2;
    base.batch.batch_size = 256;

    let presets = vec!["company1".to_string(), "company2".to_string()];
    let grid = experiment::run_tables(&base, &presets, &[TableKind::Fusion, TableKind::Normalization], out.path())?;
    for table in grid.tables.values() {
        println!("{table}");
    }
    let failed = grid.results.iter().filter(|r| r.report().is_none()).count();
    println!("{} cells, {failed} failed", grid.results.len());

    // Any variant list works too.
    let ds = base.data.load(base.seed)?;
    let variants = [
        Variant::star(NormKind::Partition),
        Variant::star_plus(FusionKind::concat(), NormKind::Layer),
    ];
    let results = experiment::run_grid(&base, &[("company1".into(), ds)], &variants, out.path());
    print!("{}", experiment::results_csv(&results));
    Ok(())
}
