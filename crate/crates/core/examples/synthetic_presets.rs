//! Generates the three calibrated synthetic presets and prints their
//! per-domain shares and click-through rates.
//!
//! Run with `cargo run --release --example synthetic_presets`.

use starplus::SyntheticSpec;

fn main() -> starplus::Result<()> {
    for preset in SyntheticSpec::PRESETS {
        let spec = SyntheticSpec::preset(preset, 42)?;
        let ds = spec.generate(100_000)?;
        println!("{preset}: {} domains, {} fields", ds.num_domains(), ds.fields().len());
        println!("{}", ds.summary_table());
    }

    // A custom spec: shares and CTRs in percent.
    let spec = SyntheticSpec::new(&[70.0, 30.0], &[2.0, 8.0], 5);
    let ds = spec.generate(20_000)?;
    println!("custom:\n{}", ds.summary_table());
    for c in spec.ground_truth()?.calibration() {
        println!("{c:?}");
    }
    Ok(())
}
