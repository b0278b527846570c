//! Compares the four normalization kinds on a two-domain batch whose domains
//! have very different scales.
//!
//! Run with `cargo run --example normalization`.

use starplus::{Matrix, Mode, NormKind, NormOptions, Normalization, ParamStore};

fn column_stats(m: &Matrix, rows: &[usize]) -> (f64, f64) {
    let v: Vec<f64> = rows.iter().map(|&r| m.row(r)[0]).collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
    (mean, var)
}

fn main() -> starplus::Result<()> {
    // Domain 0 lives near 0, domain 1 near 100 with a larger spread.
    let x = Matrix::from_rows(&[
        &[0.1, 1.0],
        &[-0.2, 2.0],
        &[0.3, 0.5],
        &[98.0, -3.0],
        &[104.0, 1.0],
        &[101.0, 4.0],
    ]);
    let domains = [0, 0, 0, 1, 1, 1];
    let groups: [&[usize]; 2] = [&[0, 1, 2], &[3, 4, 5]];

    for kind in NormKind::ALL {
        let mut store = ParamStore::new();
        let mut norm = Normalization::new(&mut store, kind, NormOptions::default(), 2, 2)?;
        let y = norm.forward(&store, &x, &domains)?;
        print!("{:<16}", kind.label());
        for (d, rows) in groups.iter().enumerate() {
            let (mean, var) = column_stats(&y, rows);
            print!("  domain {d}: mean {mean:>9.4} var {var:>9.4}");
        }
        println!();
        if kind == NormKind::Partition {
            // One EMA step from the initial (0, 1) statistics, per domain.
            println!("{:<16}  running mean after one step: {:?}", "", norm.running_mean().as_slice());
        }
    }

    // Inference uses running statistics, so a single row is fine.
    let mut store = ParamStore::new();
    let mut norm = Normalization::new(&mut store, NormKind::Batch, NormOptions::default(), 2, 2)?;
    for _ in 0..500 {
        norm.forward(&store, &x, &domains)?;
    }
    norm.set_mode(Mode::Inference);
    let one = Matrix::from_rows(&[&[50.0, 1.0]]);
    println!("batch norm, inference on one row: {:?}", norm.forward(&store, &one, &[0])?.as_slice());
    Ok(())
}
