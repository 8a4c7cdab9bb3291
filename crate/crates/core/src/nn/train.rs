use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::adam::AdamState;
use crate::nn::loss::LossKind;
use crate::nn::network::{Mode, Network};
use crate::rng::{tags, RngStream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    /// Per-sample mean of the training loss over the epoch's batches.
    pub mean_loss: f64,
    pub batches: usize,
}

/// One pass of shuffled mini-batch training. The final short batch is kept.
///
/// `epoch_rng` should be derived per epoch; the shuffle order and dropout
/// masks come from separate children of it.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    net: &mut Network,
    adam: &mut AdamState,
    inputs: &Matrix,
    targets: &Matrix,
    batch_size: usize,
    loss: LossKind,
    epoch: usize,
    epoch_rng: &RngStream,
) -> Result<EpochStats> {
    if inputs.rows() != targets.rows() {
        return Err(Error::dim(
            "train_epoch",
            "inputs and targets differ in row count",
        ));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let order = epoch_rng.derive(tags::SHUFFLE).permutation(inputs.rows());
    let mut noise = epoch_rng.derive(tags::NOISE);
    let mut total = 0.0;
    let mut batches = 0;
    for (b, idx) in order.chunks(batch_size).enumerate() {
        let x = inputs.select_rows(idx);
        let y = targets.select_rows(idx);
        let located = |e: Error| match e {
            Error::NonFinite { op } => Error::Training(format!("{op} at epoch {epoch}, batch {b}")),
            Error::Training(msg) => Error::Training(format!("epoch {epoch}, batch {b}: {msg}")),
            other => other,
        };
        let (out, tape) = net.forward(&x, Mode::Train, &mut noise).map_err(located)?;
        let (value, grad) = loss.compute(&out, &y).map_err(located)?;
        let grads = net.backward(&tape, &grad).map_err(located)?;
        adam.step(net, &grads).map_err(located)?;
        total += value * idx.len() as f64;
        batches += 1;
    }
    Ok(EpochStats {
        mean_loss: total / inputs.rows() as f64,
        batches,
    })
}
