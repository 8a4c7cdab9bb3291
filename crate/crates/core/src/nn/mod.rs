//! Training engine shared by the autoencoder and the classifier.

pub mod adam;
pub mod format;
pub mod init;
pub mod layer;
pub mod loss;
pub mod network;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use init::glorot_uniform;
pub use layer::{Activation, BatchNorm, Dense, Dropout, Layer, LayerKind};
pub use loss::LossKind;
pub use network::{Gradients, Masks, Mode, Network, Tape};
pub use train::{train_epoch, EpochStats};
