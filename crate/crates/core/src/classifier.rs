//! Classification network seeded with autoencoder layers.
//!
//! Layout: imported layers, then `BatchNorm → Dense(ReLU) → Dense(ReLU) →
//! Dense(1, Sigmoid)`. Under [`TrainApproach::FixedWeights`] the imported
//! layers are frozen; batch norm and everything after it always train.

use std::fmt;
use std::str::FromStr;

use crate::dae::{TrainedDae, TransferStrategy};
use crate::error::{Error, Result};
use crate::evaluation::{prefer, Confusion, EpochMetrics, MetricsRecord};
use crate::linalg::Matrix;
use crate::nn::{train_epoch, Activation, AdamConfig, AdamState, Dense, Layer, LossKind, Network};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrainApproach {
    /// Approach A: imported weights stay fixed.
    FixedWeights,
    /// Approach B: imported weights are fine-tuned.
    FineTune,
}

impl TrainApproach {
    pub const ALL: [TrainApproach; 2] = [TrainApproach::FixedWeights, TrainApproach::FineTune];

    pub fn label(self) -> &'static str {
        match self {
            TrainApproach::FixedWeights => "Fixed Weights (Approach A)",
            TrainApproach::FineTune => "Fine-Tuning (Approach B)",
        }
    }
}

impl fmt::Display for TrainApproach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainApproach::FixedWeights => "fixed",
            TrainApproach::FineTune => "finetune",
        })
    }
}

impl FromStr for TrainApproach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" | "a" | "A" => Ok(TrainApproach::FixedWeights),
            "finetune" | "fine-tune" | "b" | "B" => Ok(TrainApproach::FineTune),
            other => Err(Error::Config(format!(
                "unknown approach `{other}` (fixed|finetune)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub fc1_dim: usize,
    pub fc2_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Probabilities at or above this are labelled positive.
    pub threshold: f64,
    pub adam: AdamConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            fc1_dim: 64,
            fc2_dim: 16,
            epochs: 300,
            batch_size: 500,
            threshold: 0.5,
            adam: AdamConfig::default(),
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fc1_dim == 0 || self.fc2_dim == 0 {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch size must be positive".into(),
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        self.adam.validate()
    }
}

/// Number of leading layers that came from the autoencoder.
pub fn imported_layer_count(strategy: TransferStrategy) -> usize {
    match strategy {
        TransferStrategy::EncoderOnly => 1,
        TransferStrategy::CompleteAe => 2,
    }
}

pub fn assemble(
    dae: &TrainedDae,
    strategy: TransferStrategy,
    approach: TrainApproach,
    config: &ClassifierConfig,
    rng: &mut RngStream,
) -> Result<Network> {
    config.validate()?;
    let frozen = approach == TrainApproach::FixedWeights;
    let width = dae.export_width(strategy);
    let mut layers: Vec<Layer> = dae
        .export(strategy)
        .into_iter()
        .map(|l| l.frozen(frozen))
        .collect();
    layers.push(Layer::batch_norm(width)?);
    layers.push(Layer::dense(Dense::glorot(
        rng,
        width,
        config.fc1_dim,
        Activation::Relu,
    )?));
    layers.push(Layer::dense(Dense::glorot(
        rng,
        config.fc1_dim,
        config.fc2_dim,
        Activation::Relu,
    )?));
    layers.push(Layer::dense(Dense::glorot(
        rng,
        config.fc2_dim,
        1,
        Activation::Sigmoid,
    )?));
    Network::new(dae.config().input_dim, layers)
}

/// One cross-validation fold: features are rows, labels are 0/1.
#[derive(Clone, Debug)]
pub struct FoldData {
    pub train_x: Matrix,
    pub train_y: Vec<u8>,
    pub val_x: Matrix,
    pub val_y: Vec<u8>,
}

impl FoldData {
    pub fn new(train_x: Matrix, train_y: Vec<u8>, val_x: Matrix, val_y: Vec<u8>) -> Result<Self> {
        if train_x.rows() != train_y.len() || val_x.rows() != val_y.len() {
            return Err(Error::dim(
                "fold data",
                "feature rows and labels differ in count",
            ));
        }
        if train_x.cols() != val_x.cols() {
            return Err(Error::dim(
                "fold data",
                "train and validation widths differ",
            ));
        }
        if let Some(l) = train_y.iter().chain(&val_y).find(|&&l| l > 1) {
            return Err(Error::Data(format!("label {l} is not 0/1")));
        }
        Ok(FoldData {
            train_x,
            train_y,
            val_x,
            val_y,
        })
    }
}

fn label_matrix(labels: &[u8]) -> Matrix {
    Matrix::from_vec(
        labels.len(),
        1,
        labels.iter().map(|&l| f64::from(l)).collect(),
    )
    .expect("column vector shape")
}

/// Sigmoid outputs for every row of `x`.
pub fn predict(net: &Network, x: &Matrix) -> Result<Vec<f64>> {
    if net.output_dim() != 1 {
        return Err(Error::Config(
            "classifier must end in a single output".into(),
        ));
    }
    Ok(net.predict(x)?.into_vec())
}

pub fn classify(probabilities: &[f64], threshold: f64) -> Vec<u8> {
    probabilities
        .iter()
        .map(|&p| u8::from(p >= threshold))
        .collect()
}

/// BCE loss and classification metrics of `net` on `(x, y)`.
pub fn evaluate(net: &Network, x: &Matrix, y: &[u8], threshold: f64) -> Result<MetricsRecord> {
    let probs = predict(net, x)?;
    let loss = LossKind::BinaryCrossEntropy.value(
        &Matrix::from_vec(probs.len(), 1, probs.clone())?,
        &label_matrix(y),
    )?;
    let confusion = Confusion::from_labels(&classify(&probs, threshold), y)?;
    Ok(MetricsRecord::from_confusion(loss, &confusion))
}

/// Parameters of the best epoch and the metrics they produced.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochCheckpoint {
    pub metrics: EpochMetrics,
    pub snapshot: Network,
}

#[derive(Clone, Debug)]
pub struct ClassifierRun {
    /// Metrics for every epoch, in order.
    pub history: Vec<EpochMetrics>,
    /// Snapshot at the epoch chosen by validation F1.
    pub best: EpochCheckpoint,
    pub final_network: Network,
}

pub fn train_classifier(
    mut net: Network,
    fold: &FoldData,
    config: &ClassifierConfig,
    rng: &RngStream,
) -> Result<ClassifierRun> {
    config.validate()?;
    if net.input_dim() != fold.train_x.cols() {
        return Err(Error::dim(
            "train_classifier",
            format!(
                "network expects {} features, data has {}",
                net.input_dim(),
                fold.train_x.cols()
            ),
        ));
    }
    let positives = fold.train_y.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == fold.train_y.len() {
        return Err(Error::Training(
            "training fold contains a single class; stratification is broken upstream".into(),
        ));
    }
    if fold.val_y.is_empty() {
        return Err(Error::Data("empty validation fold".into()));
    }
    let targets = label_matrix(&fold.train_y);
    let mut adam = AdamState::new(config.adam);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<EpochCheckpoint> = None;
    for epoch in 1..=config.epochs {
        train_epoch(
            &mut net,
            &mut adam,
            &fold.train_x,
            &targets,
            config.batch_size,
            LossKind::BinaryCrossEntropy,
            epoch,
            &rng.derive(epoch as u64),
        )?;
        let located = |e: Error| Error::Training(format!("evaluation after epoch {epoch}: {e}"));
        let metrics = EpochMetrics {
            epoch,
            train: evaluate(&net, &fold.train_x, &fold.train_y, config.threshold)
                .map_err(located)?,
            val: evaluate(&net, &fold.val_x, &fold.val_y, config.threshold).map_err(located)?,
        };
        history.push(metrics);
        let improves = best
            .as_ref()
            .is_none_or(|b| prefer(&metrics, &b.metrics).is_lt());
        if improves {
            best = Some(EpochCheckpoint {
                metrics,
                snapshot: net.clone(),
            });
        }
    }
    Ok(ClassifierRun {
        history,
        best: best.expect("at least one epoch"),
        final_network: net,
    })
}
