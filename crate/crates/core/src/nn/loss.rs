use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    BinaryCrossEntropy,
}

impl LossKind {
    /// Mean loss over all entries and its gradient with respect to `predicted`.
    pub fn compute(self, predicted: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
        if predicted.shape() != target.shape() {
            return Err(Error::dim(
                "loss",
                format!(
                    "predicted {:?} vs target {:?}",
                    predicted.shape(),
                    target.shape()
                ),
            ));
        }
        if predicted.is_empty() {
            return Err(Error::Data("loss over an empty batch".into()));
        }
        let n = predicted.len() as f64;
        let (value, grad) = match self {
            LossKind::Mse => {
                let diff = predicted.sub(target)?;
                let value = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / n;
                (value, diff.scale(2.0 / n))
            }
            LossKind::BinaryCrossEntropy => {
                if let Some(p) = predicted
                    .as_slice()
                    .iter()
                    .find(|p| !(0.0..=1.0).contains(*p))
                {
                    return Err(Error::Config(format!(
                        "binary cross-entropy got {p}, expected a probability (missing sigmoid?)"
                    )));
                }
                if let Some(t) = target.as_slice().iter().find(|&&t| t != 0.0 && t != 1.0) {
                    return Err(Error::Data(format!(
                        "binary cross-entropy target {t} is not 0/1"
                    )));
                }
                let mut total = 0.0;
                let mut grad = Vec::with_capacity(predicted.len());
                for (&p, &t) in predicted.as_slice().iter().zip(target.as_slice()) {
                    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                    total -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
                    grad.push((p - t) / (p * (1.0 - p)) / n);
                }
                let grad = Matrix::from_vec(predicted.rows(), predicted.cols(), grad)?;
                (total / n, grad)
            }
        };
        if !value.is_finite() {
            return Err(Error::NonFinite {
                op: format!("{self} loss"),
            });
        }
        Ok((value, grad))
    }

    pub fn value(self, predicted: &Matrix, target: &Matrix) -> Result<f64> {
        self.compute(predicted, target).map(|(v, _)| v)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "mse",
            LossKind::BinaryCrossEntropy => "bce",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "bce" => Ok(LossKind::BinaryCrossEntropy),
            other => Err(Error::Config(format!("unknown loss `{other}`"))),
        }
    }
}
