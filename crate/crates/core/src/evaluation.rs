//! Stratified k-fold splitting, binary metrics, best-epoch selection and
//! cross-fold aggregation.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_labels(predicted: &[u8], truth: &[u8]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::dim(
                "confusion",
                format!("{} predictions for {} labels", predicted.len(), truth.len()),
            ));
        }
        let mut c = Confusion::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 0) => c.tn += 1,
                (0, 1) => c.fn_ += 1,
                _ => return Err(Error::Data(format!("labels must be 0/1, got ({p}, {t})"))),
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        harmonic(self.precision(), self.recall())
    }
}

/// Zero-denominator ratios are defined as 0.
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRecord {
    pub loss: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricsRecord {
    pub const NAMES: [&'static str; 5] = ["loss", "accuracy", "precision", "recall", "f1"];

    pub fn from_confusion(loss: f64, c: &Confusion) -> Self {
        MetricsRecord {
            loss,
            accuracy: c.accuracy(),
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
        }
    }

    pub fn values(&self) -> [f64; 5] {
        [
            self.loss,
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
        ]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        MetricsRecord {
            loss: v[0],
            accuracy: v[1],
            precision: v[2],
            recall: v[3],
            f1: v[4],
        }
    }
}

/// Metrics of one classifier epoch, on the training and validation splits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train: MetricsRecord,
    pub val: MetricsRecord,
}

/// Strict preference of `a` over `b`: higher validation F1, then lower
/// validation loss, then the earlier epoch.
pub fn prefer(a: &EpochMetrics, b: &EpochMetrics) -> Ordering {
    b.val
        .f1
        .total_cmp(&a.val.f1)
        .then(a.val.loss.total_cmp(&b.val.loss))
        .then(a.epoch.cmp(&b.epoch))
}

/// Best checkpoint by validation F1. `None` only for an empty slice.
pub fn select_best(checkpoints: &[EpochMetrics]) -> Option<&EpochMetrics> {
    checkpoints.iter().min_by(|a, b| prefer(a, b))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSplit {
    pub k: usize,
    pub folds: Vec<Fold>,
}

impl FoldSplit {
    /// Fold index of every sample.
    pub fn assignment(&self, n: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n];
        for (f, fold) in self.folds.iter().enumerate() {
            for &i in &fold.validation {
                out[i] = f;
            }
        }
        out
    }

    pub fn from_assignment(assignment: &[usize], k: usize) -> Result<Self> {
        if let Some(bad) = assignment.iter().find(|&&f| f >= k) {
            return Err(Error::Data(format!(
                "fold index {bad} out of range for k={k}"
            )));
        }
        let folds = (0..k)
            .map(|f| {
                let (validation, train): (Vec<usize>, Vec<usize>) =
                    (0..assignment.len()).partition(|&i| assignment[i] == f);
                Fold { train, validation }
            })
            .collect();
        Ok(FoldSplit { k, folds })
    }
}

/// Within each class, shuffles the sample indices and deals them round-robin
/// into `k` folds. Fold `i` validates on its own samples and trains on the rest.
pub fn stratified_kfold(labels: &[u8], k: usize, rng: &mut RngStream) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut assignment = vec![0usize; labels.len()];
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::Data(format!(
                "class {class} has {} samples, fewer than k={k}",
                members.len()
            )));
        }
        rng.shuffle(&mut members);
        for (pos, &i) in members.iter().enumerate() {
            assignment[i] = pos % k;
        }
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Data(format!("label {bad} is not 0/1")));
    }
    FoldSplit::from_assignment(&assignment, k)
}

/// Mean, sample standard deviation (divisor k-1) and variance of one metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dispersion {
    pub mean: f64,
    pub sd: f64,
    pub variance: f64,
}

impl Dispersion {
    pub fn of(values: &[f64]) -> Dispersion {
        let n = values.len();
        if n == 0 {
            return Dispersion {
                mean: f64::NAN,
                sd: f64::NAN,
                variance: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Dispersion {
            mean,
            sd: variance.sqrt(),
            variance,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvReport {
    pub id: String,
    pub folds: Vec<MetricsRecord>,
    /// Indexed like [`MetricsRecord::NAMES`].
    pub stats: [Dispersion; 5],
}

impl CvReport {
    pub fn stat(&self, metric: &str) -> Option<Dispersion> {
        MetricsRecord::NAMES
            .iter()
            .position(|&m| m == metric)
            .map(|i| self.stats[i])
    }

    /// Table cell for metric `index`: loss as `0.309 ± 0.37`, the rest as
    /// percentages `98.04% ± 1.09`.
    pub fn cell(&self, index: usize) -> String {
        let s = self.stats[index];
        if index == 0 {
            format!("{:.3} ± {:.2}", s.mean, s.sd)
        } else {
            format!("{:.2}% ± {:.2}", 100.0 * s.mean, 100.0 * s.sd)
        }
    }
}

pub fn aggregate(id: impl Into<String>, folds: Vec<MetricsRecord>) -> CvReport {
    let stats = std::array::from_fn(|m| {
        let values: Vec<f64> = folds.iter().map(|r| r.values()[m]).collect();
        Dispersion::of(&values)
    });
    CvReport {
        id: id.into(),
        folds,
        stats,
    }
}
