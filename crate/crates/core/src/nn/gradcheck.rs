//! Central-difference verification of hand-written backward passes.

use std::fmt;

use crate::error::{Error, Result};
use crate::nn::param::ParamStore;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Base step; the actual step for an entry `v` is `step * max(1, |v|)`.
    pub step: f64,
    /// Denominator floor so near-zero gradients are compared absolutely.
    pub abs_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            step: 1e-5,
            abs_floor: 1e-6,
        }
    }
}

impl GradCheckOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }
}

/// One objective evaluation. `pattern` fingerprints the piecewise-linear
/// region (e.g. relu on/off masks); entries whose perturbation changes it
/// straddle a kink and are skipped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub value: f64,
    pub pattern: u64,
}

impl From<f64> for Probe {
    fn from(value: f64) -> Self {
        Probe { value, pattern: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntryError {
    pub param: String,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

impl fmt::Display for EntryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}[{},{}]: analytic {:.6e} numeric {:.6e} rel {:.3e}",
            self.param, self.row, self.col, self.analytic, self.numeric, self.rel_error
        )
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
    pub worst: Option<EntryError>,
    pub failures: Vec<EntryError>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} checked={} skipped={} max_rel_error={:.3e} tolerance={:.1e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.checked,
            self.skipped,
            self.max_rel_error,
            self.tolerance
        )?;
        if let Some(w) = &self.worst {
            write!(f, " worst={w}")?;
        }
        Ok(())
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the gradients currently held in `store` with central differences
/// of `objective` for every entry of every parameter.
///
/// Values are restored bit-exactly after each probe.
pub fn grad_check<F, P>(
    store: &mut ParamStore,
    mut objective: F,
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<P>,
    P: Into<Probe>,
{
    let mut eval = |store: &ParamStore| -> Result<Probe> {
        let probe: Probe = objective(store)?.into();
        if !probe.value.is_finite() {
            return Err(Error::Evaluation(format!("objective returned {}", probe.value)));
        }
        Ok(probe)
    };
    let base = eval(store)?;
    let mut report = GradCheckReport {
        tolerance: opts.tolerance,
        checked: 0,
        skipped: 0,
        max_rel_error: 0.0,
        worst: None,
        failures: Vec::new(),
    };
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let (rows, cols) = store.get(id).shape();
        for r in 0..rows {
            for c in 0..cols {
                let original = store.value(id)[(r, c)];
                let h = opts.step * original.abs().max(1.0);
                store.value_mut(id)[(r, c)] = original + h;
                let plus = eval(store);
                store.value_mut(id)[(r, c)] = original - h;
                let minus = eval(store);
                store.value_mut(id)[(r, c)] = original;
                let (plus, minus) = (plus?, minus?);
                if plus.pattern != base.pattern || minus.pattern != base.pattern {
                    report.skipped += 1;
                    continue;
                }
                let numeric = (plus.value - minus.value) / (2.0 * h);
                let analytic = store.grad(id)[(r, c)];
                let rel = relative_error(analytic, numeric, opts.abs_floor);
                report.checked += 1;
                let entry = || EntryError {
                    param: store.get(id).name.clone(),
                    row: r,
                    col: c,
                    analytic,
                    numeric,
                    rel_error: rel,
                };
                if rel > report.max_rel_error || report.worst.is_none() {
                    report.max_rel_error = rel;
                    report.worst = Some(entry());
                }
                if rel > opts.tolerance {
                    report.failures.push(entry());
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn linear_setup() -> (ParamStore, Matrix, Matrix) {
        let mut store = ParamStore::new();
        store
            .register("w", Matrix::from_rows(&[&[0.5], &[-1.25], &[2.0]]))
            .unwrap();
        store.register("b", Matrix::from_rows(&[&[0.1]])).unwrap();
        let x = Matrix::from_rows(&[&[1.0, 2.0, -1.0], &[0.5, -0.3, 0.8], &[2.0, 0.0, 1.0]]);
        let y = Matrix::column(&[1.0, -2.0, 0.5]);
        (store, x, y)
    }

    fn squared_loss(store: &ParamStore, x: &Matrix, y: &Matrix) -> f64 {
        let w = store.find("w").unwrap();
        let b = store.find("b").unwrap();
        let mut pred = x.matmul(store.value(w)).unwrap();
        pred.add_row_broadcast(store.value(b)).unwrap();
        pred.as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(p, t)| 0.5 * (p - t).powi(2))
            .sum()
    }

    fn fill_linear_grads(store: &mut ParamStore, x: &Matrix, y: &Matrix) {
        let w = store.find("w").unwrap();
        let b = store.find("b").unwrap();
        let mut pred = x.matmul(store.value(w)).unwrap();
        pred.add_row_broadcast(store.value(b)).unwrap();
        let resid = Matrix::column(
            &pred
                .as_slice()
                .iter()
                .zip(y.as_slice())
                .map(|(p, t)| p - t)
                .collect::<Vec<_>>(),
        );
        *store.grad_mut(w) = x.t_matmul(&resid).unwrap();
        *store.grad_mut(b) = resid.sum_rows();
    }

    #[test]
    fn linear_model_is_essentially_exact() {
        let (mut store, x, y) = linear_setup();
        fill_linear_grads(&mut store, &x, &y);
        let before: Vec<_> = store.iter().map(|(_, p)| p.value.clone()).collect();
        let report = grad_check(
            &mut store,
            |s| Ok(squared_loss(s, &x, &y)),
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passed());
        assert_eq!(report.checked, 4);
        assert!(report.max_rel_error < 1e-9, "{report}");
        let after: Vec<_> = store.iter().map(|(_, p)| p.value.clone()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn sign_flipped_gradient_fails() {
        let (mut store, x, y) = linear_setup();
        fill_linear_grads(&mut store, &x, &y);
        let w = store.find("w").unwrap();
        let flipped = store.grad(w).scale(-1.0);
        *store.grad_mut(w) = flipped;
        let report = grad_check(
            &mut store,
            |s| Ok(squared_loss(s, &x, &y)),
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(!report.passed());
        assert_eq!(report.failures.len(), 3);
        assert!(report.failures.iter().all(|f| f.param == "w"));
    }

    #[test]
    fn non_finite_objective_is_an_evaluation_error() {
        let (mut store, _, _) = linear_setup();
        let err = grad_check(&mut store, |_| Ok(f64::NAN), GradCheckOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Evaluation(_)));
    }

    #[test]
    fn pattern_changes_are_skipped() {
        let mut store = ParamStore::new();
        store.register("v", Matrix::from_rows(&[&[0.0]])).unwrap();
        // |v| has a kink at 0; the pattern marks which side we are on.
        let report = grad_check(
            &mut store,
            |s| {
                let v = s.value(s.find("v").unwrap())[(0, 0)];
                Ok(Probe {
                    value: v.abs(),
                    pattern: u64::from(v > 0.0),
                })
            },
            GradCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(report.skipped, 1);
        assert_eq!(report.checked, 0);
    }
}
