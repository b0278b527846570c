//! Round-trips a dataset through CSV and shows lenient ingest of bad rows.
//!
//! Run with `cargo run --example csv_ingest`.

use std::io::Write;

use starplus::data::csv::{export_csv, ingest_csv, CsvSchema};
use starplus::{Error, SyntheticSpec};

fn main() -> starplus::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| Error::io("temporary directory", e))?;
    let ds = SyntheticSpec::preset("company2", 1)?.generate(2_000)?;
    let csv_path = dir.path().join("data.csv");
    let schema_path = dir.path().join("schema.toml");
    export_csv(&ds, &csv_path)?;
    let schema = CsvSchema::for_dataset(&ds);
    schema.save(&schema_path)?;
    println!("{}", std::fs::read_to_string(&schema_path).map_err(|e| Error::io(&schema_path, e))?);

    let back = ingest_csv(&csv_path, &CsvSchema::load(&schema_path)?, false)?;
    println!("read {} of {} rows back", back.dataset.len(), ds.len());

    // Corrupt a few lines; strict ingest stops at the first, lenient skips and reports them.
    let mut f = std::fs::OpenOptions::new().append(true).open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    writeln!(f, "not,enough").map_err(|e| Error::io(&csv_path, e))?;
    writeln!(f, "x,y,z,w,v,u,t,s").map_err(|e| Error::io(&csv_path, e))?;
    drop(f);
    if let Err(e) = ingest_csv(&csv_path, &schema, false) {
        println!("strict: {e}");
    }
    let lenient = ingest_csv(&csv_path, &schema, true)?;
    println!("lenient: kept {} of {} rows", lenient.dataset.len(), lenient.total_rows);
    for r in &lenient.rejected {
        println!("  line {}: {}", r.line, r.message);
    }
    Ok(())
}
