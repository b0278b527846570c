//! Ranking AUC and logloss, overall and per domain.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

/// Probability clamp applied before taking logs.
pub const LOGLOSS_CLAMP: f64 = 1e-15;

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Validation(format!("score {i} is NaN")));
    }
    if let Some(i) = labels.iter().position(|&y| y > 1) {
        return Err(Error::Validation(format!("label {i} is {}, expected 0 or 1", labels[i])));
    }
    Ok(())
}

/// Twice the Mann–Whitney count, `2·concordant + tied`, with positive and negative totals.
///
/// One sort; each block of equal scores contributes `pos·neg_below` concordant
/// pairs and `pos·neg_in_block` ties.
pub fn auc_counts(scores: &[f64], labels: &[u8]) -> Result<(u128, u64, u64)> {
    check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut twice = 0u128;
    let mut neg_below = 0u64;
    let mut pos_total = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]].total_cmp(&scores[order[i]]) == Ordering::Equal {
            if labels[order[j]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice += 2 * u128::from(pos) * u128::from(neg_below) + u128::from(pos) * u128::from(neg);
        neg_below += neg;
        pos_total += pos;
        i = j;
    }
    Ok((twice, pos_total, neg_below))
}

/// Probability that a random positive outranks a random negative; ties count half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (twice, p, n) = auc_counts(scores, labels)?;
    if p == 0 || n == 0 {
        return Err(Error::UndefinedAuc {
            positives: p,
            negatives: n,
        });
    }
    Ok(twice as f64 / (2 * u128::from(p) * u128::from(n)) as f64)
}

/// Mean binary cross-entropy of probabilities, clamped to `[1e-15, 1 − 1e-15]`.
pub fn logloss(probs: &[f64], labels: &[u8]) -> Result<f64> {
    check_inputs(probs, labels)?;
    if probs.is_empty() {
        return Err(Error::Validation("logloss of an empty set".into()));
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(LOGLOSS_CLAMP, 1.0 - LOGLOSS_CLAMP);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / probs.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub domain: String,
    pub examples: usize,
    pub positives: usize,
    pub negatives: usize,
    /// `None` when the row lacks one of the classes.
    pub auc: Option<f64>,
    /// `None` for an empty row.
    pub logloss: Option<f64>,
}

impl MetricRow {
    fn compute(domain: String, probs: &[f64], labels: &[u8]) -> Result<Self> {
        let positives = labels.iter().filter(|&&y| y == 1).count();
        let auc = match auc(probs, labels) {
            Ok(a) => Some(a),
            Err(Error::UndefinedAuc { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            domain,
            examples: labels.len(),
            positives,
            negatives: labels.len() - positives,
            auc,
            logloss: if labels.is_empty() {
                None
            } else {
                Some(logloss(probs, labels)?)
            },
        })
    }

    pub fn auc_defined(&self) -> bool {
        self.auc.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub overall: MetricRow,
    pub domains: Vec<MetricRow>,
}

/// Rows for every domain id in `0..names.len()`, in id order.
pub fn report_with_names(probs: &[f64], labels: &[u8], domains: &[usize], names: &[String]) -> Result<MetricReport> {
    check_inputs(probs, labels)?;
    if domains.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} domain ids for {} labels",
            domains.len(),
            labels.len()
        )));
    }
    if let Some(&d) = domains.iter().find(|&&d| d >= names.len()) {
        return Err(Error::Index {
            what: "domain id in report".into(),
            index: d,
            bound: names.len(),
        });
    }
    let overall = MetricRow::compute("overall".into(), probs, labels)?;
    let rows = names
        .iter()
        .enumerate()
        .map(|(d, name)| {
            let (p, y): (Vec<f64>, Vec<u8>) = domains
                .iter()
                .zip(probs.iter().zip(labels))
                .filter(|(&dd, _)| dd == d)
                .map(|(_, (&p, &y))| (p, y))
                .unzip();
            MetricRow::compute(name.clone(), &p, &y)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport { overall, domains: rows })
}

/// Rows for each domain id present, ascending, named by id.
pub fn report(probs: &[f64], labels: &[u8], domains: &[usize]) -> Result<MetricReport> {
    let m = domains.iter().max().map_or(0, |d| d + 1);
    let names: Vec<String> = (0..m).map(|d| d.to_string()).collect();
    let mut r = report_with_names(probs, labels, domains, &names)?;
    r.domains.retain(|row| row.examples > 0);
    Ok(r)
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.digits$}"))
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "split,domain,examples,positives,auc,logloss";

    /// CSV lines (no header); undefined values are written as `NA`.
    pub fn csv_rows(&self, split: &str) -> String {
        let mut s = String::new();
        for row in self.domains.iter().chain(std::iter::once(&self.overall)) {
            let _ = writeln!(
                s,
                "{split},{},{},{},{},{}",
                row.domain,
                row.examples,
                row.positives,
                row.auc.map_or_else(|| "NA".to_string(), |x| format!("{x:?}")),
                row.logloss.map_or_else(|| "NA".to_string(), |x| format!("{x:?}")),
            );
        }
        s
    }

    pub fn to_csv(&self, split: &str) -> String {
        format!("{}\n{}", Self::CSV_HEADER, self.csv_rows(split))
    }

    /// Domains as columns, AUC and logloss as rows.
    /// Fixed-width table; domains without examples are omitted.
    pub fn pretty_table(&self, title: &str) -> String {
        let rows: Vec<&MetricRow> = self
            .domains
            .iter()
            .filter(|r| r.examples > 0)
            .chain(std::iter::once(&self.overall))
            .collect();
        let width = rows
            .iter()
            .map(|r| r.domain.len())
            .chain([7, 10])
            .max()
            .unwrap_or(10);
        let mut s = String::new();
        let _ = write!(s, "{:<10}", title);
        for r in &rows {
            let _ = write!(s, " {:>width$}", r.domain);
        }
        s.push('\n');
        for (label, get) in [
            ("AUC", (|r: &MetricRow| r.auc) as fn(&MetricRow) -> Option<f64>),
            ("Logloss", |r: &MetricRow| r.logloss),
        ] {
            let _ = write!(s, "{label:<10}");
            for r in &rows {
                let _ = write!(s, " {:>width$}", fmt_opt(get(r), 4));
            }
            s.push('\n');
        }
        let _ = write!(s, "{:<10}", "examples");
        for r in &rows {
            let _ = write!(s, " {:>width$}", r.examples);
        }
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(n²) pair count producing the same integer numerator.
    fn pairwise(scores: &[f64], labels: &[u8]) -> f64 {
        let (mut twice, mut p, mut n) = (0u128, 0u128, 0u128);
        for &y in labels {
            if y == 1 {
                p += 1;
            } else {
                n += 1;
            }
        }
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    if scores[i] > scores[j] {
                        twice += 2;
                    } else if scores[i] == scores[j] {
                        twice += 1;
                    }
                }
            }
        }
        twice as f64 / (2 * p * n) as f64
    }

    #[test]
    fn spec_examples() {
        assert_eq!(auc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.9], &[1, 0]).unwrap(), 0.0);
        assert_eq!(auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        assert!((logloss(&[0.5; 4], &[1, 0, 0, 1]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let near = logloss(&[1.0, 0.0], &[1, 0]).unwrap();
        assert!(near > 0.0 && near < 1e-14, "{near}");
    }

    #[test]
    fn single_class_is_flagged() {
        assert!(matches!(
            auc(&[0.1, 0.2], &[1, 1]),
            Err(Error::UndefinedAuc { positives: 2, negatives: 0 })
        ));
    }

    #[test]
    fn nan_scores_are_rejected() {
        assert!(matches!(auc(&[f64::NAN, 0.2], &[1, 0]), Err(Error::Validation(_))));
    }

    #[test]
    fn random_with_duplicates_matches_pairwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let scores: Vec<f64> = (0..200).map(|_| f64::from(rng.random_range(0..20)) / 20.0).collect();
        let labels: Vec<u8> = (0..200).map(|_| u8::from(rng.random_bool(0.4))).collect();
        assert_eq!(auc(&scores, &labels).unwrap(), pairwise(&scores, &labels));
    }

    #[test]
    fn random_logloss_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p: Vec<f64> = (0..300).map(|_| rng.random_range(0.001..0.999)).collect();
        let y: Vec<u8> = (0..300).map(|_| u8::from(rng.random_bool(0.3))).collect();
        let direct = p
            .iter()
            .zip(&y)
            .map(|(&p, &y)| -(f64::from(y) * p.ln() + (1.0 - f64::from(y)) * (1.0 - p).ln()))
            .sum::<f64>()
            / 300.0;
        assert!((logloss(&p, &y).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn report_rows() {
        let probs = [0.9, 0.2, 0.7, 0.6, 0.4, 0.8];
        let labels = [1, 0, 1, 1, 0, 1];
        let domains = [0, 0, 1, 1, 2, 2];
        let r = report(&probs, &labels, &domains).unwrap();
        assert_eq!(r.domains.len(), 3);
        assert_eq!(r.domains[1].auc, None);
        assert!(r.overall.auc.is_some());
        let total: usize = r.domains.iter().map(|d| d.examples).sum();
        assert_eq!(total, r.overall.examples);
        for (d, row) in r.domains.iter().enumerate() {
            let idx: Vec<usize> = (0..6).filter(|&i| domains[i] == d).collect();
            let p: Vec<f64> = idx.iter().map(|&i| probs[i]).collect();
            let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            assert_eq!(row.auc, auc(&p, &y).ok());
        }
        let one = report(&probs, &labels, &[0; 6]).unwrap();
        assert_eq!(one.domains[0].auc, one.overall.auc);
        assert_eq!(one.domains[0].logloss, one.overall.logloss);
        assert!(report(&probs, &labels, &[0; 5]).is_err());
    }

    #[test]
    fn csv_uses_na_for_undefined() {
        let r = report(&[0.9, 0.2, 0.7], &[1, 0, 1], &[0, 0, 1]).unwrap();
        let csv = r.to_csv("test");
        assert!(csv.starts_with(MetricReport::CSV_HEADER));
        assert!(csv.contains("test,1,1,1,NA,"), "{csv}");
    }

    proptest! {
        #[test]
        fn monotone_transform_invariance(
            raw in prop::collection::vec((-8i32..8, any::<bool>()), 2..120)
        ) {
            let logits: Vec<f64> = raw.iter().map(|(s, _)| f64::from(*s) * 0.5).collect();
            let labels: Vec<u8> = raw.iter().map(|(_, y)| u8::from(*y)).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let probs: Vec<f64> = logits.iter().map(|&z| 1.0 / (1.0 + (-z).exp())).collect();
            prop_assert_eq!(auc(&logits, &labels).unwrap(), auc(&probs, &labels).unwrap());
        }

        #[test]
        fn complementary_labels_sum_to_one(
            raw in prop::collection::vec((0u8..10, any::<bool>()), 2..200)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| f64::from(*s)).collect();
            let labels: Vec<u8> = raw.iter().map(|(_, y)| u8::from(*y)).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let flipped: Vec<u8> = labels.iter().map(|y| 1 - y).collect();
            prop_assert_eq!(auc(&scores, &labels).unwrap() + auc(&scores, &flipped).unwrap(), 1.0);
        }

        #[test]
        fn sorted_equals_pairwise(
            raw in prop::collection::vec((0u8..30, any::<bool>()), 2..500)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| f64::from(*s) / 7.0).collect();
            let labels: Vec<u8> = raw.iter().map(|(_, y)| u8::from(*y)).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            prop_assert_eq!(auc(&scores, &labels).unwrap(), pairwise(&scores, &labels));
        }

        #[test]
        fn constant_logloss_is_minimized_at_empirical_rate(
            labels in prop::collection::vec(0u8..2, 5..80)
        ) {
            let rate = labels.iter().map(|&y| f64::from(y)).sum::<f64>() / labels.len() as f64;
            prop_assume!(rate > 0.0 && rate < 1.0);
            let at = |p: f64| logloss(&vec![p; labels.len()], &labels).unwrap();
            let best = at(rate);
            for i in 1..200 {
                let p = f64::from(i) / 200.0;
                prop_assert!(at(p) >= best - 1e-12, "p={} beats the empirical rate {}", p, rate);
            }
        }
    }
}
