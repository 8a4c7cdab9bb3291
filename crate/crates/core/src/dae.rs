//! Denoising autoencoder: the source of transferable weights.
//!
//! Layout is `Dropout(corruption) → Dense(d→code, ReLU) → Dense(code→d, Linear)`.
//! The dropout layer corrupts the input during training only; the loss always
//! targets the clean input.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::format::{format_real, read_network, write_network};
use crate::nn::{
    train_epoch, Activation, AdamConfig, AdamState, Dense, Layer, LayerKind, LossKind, Network,
};
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct DaeConfig {
    pub input_dim: usize,
    pub code_dim: usize,
    /// Fraction of input entries zeroed per training batch.
    pub corruption: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub adam: AdamConfig,
}

impl DaeConfig {
    pub const DEFAULT_CODE_DIM: usize = 128;
    pub const DEFAULT_CORRUPTION: f64 = 0.10;
    pub const DEFAULT_EPOCHS: usize = 100;
    pub const DEFAULT_BATCH_SIZE: usize = 500;

    pub fn new(input_dim: usize) -> Self {
        DaeConfig {
            input_dim,
            code_dim: Self::DEFAULT_CODE_DIM,
            corruption: Self::DEFAULT_CORRUPTION,
            epochs: Self::DEFAULT_EPOCHS,
            batch_size: Self::DEFAULT_BATCH_SIZE,
            loss: LossKind::Mse,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.code_dim == 0 {
            return Err(Error::Config("autoencoder dims must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.corruption) {
            return Err(Error::Config(format!(
                "corruption rate {} outside [0, 1)",
                self.corruption
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch size must be positive".into(),
            ));
        }
        self.adam.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransferStrategy {
    /// Import only the encoder.
    EncoderOnly,
    /// Import encoder and decoder.
    CompleteAe,
}

impl TransferStrategy {
    pub const ALL: [TransferStrategy; 2] =
        [TransferStrategy::EncoderOnly, TransferStrategy::CompleteAe];

    pub fn label(self) -> &'static str {
        match self {
            TransferStrategy::EncoderOnly => "Encoding Layers",
            TransferStrategy::CompleteAe => "Complete AE",
        }
    }
}

impl fmt::Display for TransferStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransferStrategy::EncoderOnly => "encoder",
            TransferStrategy::CompleteAe => "complete",
        })
    }
}

impl FromStr for TransferStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder" | "encoder-only" => Ok(TransferStrategy::EncoderOnly),
            "complete" | "complete-ae" => Ok(TransferStrategy::CompleteAe),
            other => Err(Error::Config(format!(
                "unknown strategy `{other}` (encoder|complete)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub val: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedDae {
    network: Network,
    config: DaeConfig,
    history: Vec<EpochLoss>,
}

pub fn build_dae(config: &DaeConfig, rng: &mut RngStream) -> Result<Network> {
    config.validate()?;
    let d = config.input_dim;
    let code = config.code_dim;
    Network::new(
        d,
        vec![
            Layer::dropout(config.corruption)?,
            Layer::dense(Dense::glorot(rng, d, code, Activation::Relu)?),
            Layer::dense(Dense::glorot(rng, code, d, Activation::Linear)?),
        ],
    )
}

/// Reconstruction loss of `x` with corruption disabled.
pub fn reconstruction_loss(net: &Network, x: &Matrix, loss: LossKind) -> Result<f64> {
    let recon = net.predict(x)?;
    loss.value(&recon, x)
}

pub fn train_dae(
    net: Network,
    x_train: &Matrix,
    x_val: &Matrix,
    config: &DaeConfig,
    rng: &RngStream,
) -> Result<TrainedDae> {
    train_dae_observed(net, x_train, x_val, config, rng, |_, _| {})
}

/// Like [`train_dae`], calling `observer(epoch, &network)` after each epoch.
pub fn train_dae_observed(
    mut net: Network,
    x_train: &Matrix,
    x_val: &Matrix,
    config: &DaeConfig,
    rng: &RngStream,
    mut observer: impl FnMut(usize, &Network),
) -> Result<TrainedDae> {
    config.validate()?;
    check_layout(&net, config)?;
    for (name, x) in [("training", x_train), ("validation", x_val)] {
        if x.cols() != config.input_dim {
            return Err(Error::dim(
                "train_dae",
                format!(
                    "{name} data has {} columns, autoencoder expects {}",
                    x.cols(),
                    config.input_dim
                ),
            ));
        }
        if x.rows() == 0 {
            return Err(Error::Data(format!("empty {name} set for autoencoder")));
        }
    }
    let mut adam = AdamState::new(config.adam);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let stats = train_epoch(
            &mut net,
            &mut adam,
            x_train,
            x_train,
            config.batch_size,
            config.loss,
            epoch,
            &rng.derive(epoch as u64),
        )?;
        let val = reconstruction_loss(&net, x_val, config.loss)
            .map_err(|e| Error::Training(format!("validation at epoch {epoch}: {e}")))?;
        history.push(EpochLoss {
            epoch,
            train: stats.mean_loss,
            val,
        });
        observer(epoch, &net);
    }
    Ok(TrainedDae {
        network: net,
        config: config.clone(),
        history,
    })
}

fn check_layout(net: &Network, config: &DaeConfig) -> Result<()> {
    let layers = net.layers();
    let ok = layers.len() == 3
        && matches!(layers[0].kind, LayerKind::Dropout(_))
        && layers[1]
            .as_dense()
            .is_some_and(|d| d.in_dim() == config.input_dim && d.out_dim() == config.code_dim)
        && layers[2]
            .as_dense()
            .is_some_and(|d| d.out_dim() == config.input_dim);
    if ok {
        Ok(())
    } else {
        Err(Error::Config(
            "network is not a dropout/encoder/decoder autoencoder matching the config".into(),
        ))
    }
}

impl TrainedDae {
    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn config(&self) -> &DaeConfig {
        &self.config
    }

    pub fn history(&self) -> &[EpochLoss] {
        &self.history
    }

    pub fn encoder(&self) -> &Dense {
        self.network.layers()[1]
            .as_dense()
            .expect("layout checked at construction")
    }

    pub fn decoder(&self) -> &Dense {
        self.network.layers()[2]
            .as_dense()
            .expect("layout checked at construction")
    }

    /// Layers handed to the classifier. The corruption layer is never exported.
    pub fn export(&self, strategy: TransferStrategy) -> Vec<Layer> {
        let encoder = Layer::dense(self.encoder().clone());
        match strategy {
            TransferStrategy::EncoderOnly => vec![encoder],
            TransferStrategy::CompleteAe => vec![encoder, Layer::dense(self.decoder().clone())],
        }
    }

    pub fn export_width(&self, strategy: TransferStrategy) -> usize {
        match strategy {
            TransferStrategy::EncoderOnly => self.config.code_dim,
            TransferStrategy::CompleteAe => self.config.input_dim,
        }
    }

    pub fn to_daept(&self) -> String {
        let c = &self.config;
        let meta = vec![
            ("model".to_string(), "dae".to_string()),
            ("epochs".to_string(), c.epochs.to_string()),
            ("batch_size".to_string(), c.batch_size.to_string()),
            ("loss".to_string(), c.loss.to_string()),
            (
                "learning_rate".to_string(),
                format_real(c.adam.learning_rate),
            ),
            ("beta1".to_string(), format_real(c.adam.beta1)),
            ("beta2".to_string(), format_real(c.adam.beta2)),
            ("adam_epsilon".to_string(), format_real(c.adam.epsilon)),
        ];
        write_network(&self.network, &meta)
    }

    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for h in &self.history {
            out.push_str(&format!(
                "{},{},{}\n",
                h.epoch,
                format_real(h.train),
                format_real(h.val)
            ));
        }
        out
    }

    /// Rebuilds a trained autoencoder from its parameter file and history CSV.
    pub fn from_parts(daept: &str, history_csv: &str) -> Result<TrainedDae> {
        let (network, meta) = read_network(daept)?;
        let get = |key: &str| -> Result<&str> {
            meta.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Format {
                    line: 0,
                    message: format!("missing meta `{key}`"),
                })
        };
        let num = |key: &str| -> Result<f64> {
            get(key)?.parse().map_err(|_| Error::Format {
                line: 0,
                message: format!("bad meta `{key}`"),
            })
        };
        let encoder = network
            .layers()
            .get(1)
            .and_then(Layer::as_dense)
            .ok_or_else(|| Error::Format {
                line: 0,
                message: "autoencoder file lacks an encoder layer".into(),
            })?;
        let corruption = match network.layers().first().map(|l| &l.kind) {
            Some(LayerKind::Dropout(d)) => d.rate(),
            _ => {
                return Err(Error::Format {
                    line: 0,
                    message: "autoencoder file lacks the corruption layer".into(),
                })
            }
        };
        let config = DaeConfig {
            input_dim: network.input_dim(),
            code_dim: encoder.out_dim(),
            corruption,
            epochs: num("epochs")? as usize,
            batch_size: num("batch_size")? as usize,
            loss: get("loss")?.parse()?,
            adam: AdamConfig {
                learning_rate: num("learning_rate")?,
                beta1: num("beta1")?,
                beta2: num("beta2")?,
                epsilon: num("adam_epsilon")?,
            },
        };
        check_layout(&network, &config)?;
        let history = parse_history(history_csv)?;
        Ok(TrainedDae {
            network,
            config,
            history,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let model = dir.join("dae.daept");
        fs::write(&model, self.to_daept()).map_err(|e| Error::io(&model, e))?;
        let hist = dir.join("dae_history.csv");
        fs::write(&hist, self.history_csv()).map_err(|e| Error::io(&hist, e))
    }

    pub fn load(dir: &Path) -> Result<TrainedDae> {
        let model = dir.join("dae.daept");
        let hist = dir.join("dae_history.csv");
        let daept = fs::read_to_string(&model).map_err(|e| Error::io(&model, e))?;
        let csv = fs::read_to_string(&hist).map_err(|e| Error::io(&hist, e))?;
        TrainedDae::from_parts(&daept, &csv)
    }
}

pub fn parse_history(text: &str) -> Result<Vec<EpochLoss>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "epoch,train_loss,val_loss")) => {}
        _ => {
            return Err(Error::Format {
                line: 1,
                message: "expected header `epoch,train_loss,val_loss`".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let bad = || Error::Format {
                line: i + 1,
                message: format!("bad history row `{l}`"),
            };
            let parts: Vec<&str> = l.split(',').collect();
            if parts.len() != 3 {
                return Err(bad());
            }
            Ok(EpochLoss {
                epoch: parts[0].parse().map_err(|_| bad())?,
                train: parts[1].parse().map_err(|_| bad())?,
                val: parts[2].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}
