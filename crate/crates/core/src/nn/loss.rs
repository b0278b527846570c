use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Logistic function, evaluated without overflow for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug)]
pub struct BceOutput {
    /// Mean binary cross-entropy over the batch.
    pub loss: f64,
    /// d loss / d logit, already scaled by `1/n`.
    pub grad: Matrix,
}

/// Mean binary cross-entropy on logits.
///
/// Uses `max(z, 0) - z·y + ln(1 + e^{-|z|})` per element so saturated logits
/// neither overflow nor lose the small tail probability.
pub fn bce_with_logits(logits: &Matrix, labels: &Matrix) -> Result<BceOutput> {
    logits.ensure_same_shape(labels, "bce_loss")?;
    if logits.cols() != 1 {
        return Err(Error::Dimension {
            op: "bce_loss",
            left: logits.shape(),
            right: (logits.rows(), 1),
        });
    }
    let n = logits.rows();
    if n == 0 {
        return Err(Error::Validation("bce_loss on an empty batch".into()));
    }
    if let Some(bad) = labels.as_slice().iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Validation(format!("label {bad} is not 0 or 1")));
    }
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(n, 1);
    for (i, (&z, &y)) in logits.as_slice().iter().zip(labels.as_slice()).enumerate() {
        total += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        grad.as_mut_slice()[i] = (sigmoid(z) - y) * inv_n;
    }
    Ok(BceOutput {
        loss: total * inv_n,
        grad,
    })
}
