use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::param::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update over every parameter in the store.
///
/// A parameter whose gradient is identically zero this step is left alone:
/// its value, moments and step count do not change. This keeps towers of
/// domains absent from a batch frozen instead of drifting on stale momentum.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) {
    for p in store.iter_mut() {
        if p.grad.as_slice().iter().all(|&g| g == 0.0) {
            continue;
        }
        p.step_count += 1;
        let t = p.step_count as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        let values = p.value.as_mut_slice();
        let m1 = p.m1.as_mut_slice();
        let m2 = p.m2.as_mut_slice();
        for (i, &g) in p.grad.as_slice().iter().enumerate() {
            m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * g;
            m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m1[i] / bias1;
            let v_hat = m2[i] / bias2;
            values[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    #[test]
    fn zero_gradient_leaves_values_unchanged() {
        let mut store = ParamStore::new();
        let id = store.register("w", Matrix::from_rows(&[&[1.5, -2.0]])).unwrap();
        // Give it momentum first, then a zero-gradient step.
        store.grad_mut(id).fill(0.3);
        adam_step(&mut store, &AdamConfig::default());
        let before = store.value(id).clone();
        store.zero_grads();
        adam_step(&mut store, &AdamConfig::default());
        assert_eq!(store.value(id), &before);
        assert_eq!(store.get(id).step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        for g in [2.5, -0.01] {
            let mut store = ParamStore::new();
            let id = store.register("v", Matrix::from_rows(&[&[1.0]])).unwrap();
            store.grad_mut(id).fill(g);
            adam_step(&mut store, &cfg);
            let delta = store.value(id)[(0, 0)] - 1.0;
            assert!((delta + cfg.learning_rate * g.signum()).abs() < 1e-8, "{delta}");
        }
    }

    #[test]
    fn quadratic_loss_decreases_monotonically() {
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut store = ParamStore::new();
        let id = store.register("v", Matrix::from_rows(&[&[0.0]])).unwrap();
        let loss = |v: f64| (v - 3.0).powi(2);
        let mut prev = loss(store.value(id)[(0, 0)]);
        for _ in 0..5 {
            let v = store.value(id)[(0, 0)];
            store.zero_grads();
            store.grad_mut(id).fill(2.0 * (v - 3.0));
            adam_step(&mut store, &cfg);
            let now = loss(store.value(id)[(0, 0)]);
            assert!(now < prev, "{now} !< {prev}");
            prev = now;
        }
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig::default().validate().is_ok());
        let bad = AdamConfig {
            learning_rate: 0.0,
            ..AdamConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = AdamConfig {
            beta2: 1.0,
            ..AdamConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
