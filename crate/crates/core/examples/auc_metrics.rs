//! Exact rank AUC, logloss and per-domain reports.
//!
//! Run with `cargo run --example auc_metrics`.

use starplus::metrics::{auc_counts, report_with_names};
use starplus::{auc, logloss, Error};

fn main() -> starplus::Result<()> {
    let scores = [0.9, 0.8, 0.8, 0.7, 0.3, 0.3, 0.2, 0.1];
    let labels = [1, 1, 0, 1, 0, 1, 0, 0];
    // Ties count one half: the AUC is an exact ratio of integers.
    let (twice_wins, pos, neg) = auc_counts(&scores, &labels)?;
    println!("AUC = {twice_wins} / (2 * {pos} * {neg}) = {}", auc(&scores, &labels)?);
    println!("logloss = {:.6}", logloss(&scores, &labels)?);
    println!("logloss of a constant 0.5 = {:.6} (ln 2 = {:.6})", logloss(&[0.5; 8], &labels)?, std::f64::consts::LN_2);

    match auc(&[0.4, 0.6], &[1, 1]) {
        Err(e @ Error::UndefinedAuc { .. }) => println!("single-class input: {e}"),
        other => println!("unexpected: {other:?}"),
    }

    // Domain 2 has no negatives, so its AUC is reported as undefined.
    let domains = [0, 0, 0, 1, 1, 2, 1, 0];
    let names: Vec<String> = ["search", "feed", "banner"].map(String::from).to_vec();
    let report = report_with_names(&scores, &labels, &domains, &names)?;
    println!("{}", report.pretty_table("per-domain"));
    print!("{}", report.to_csv("example"));
    Ok(())
}
