use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::init::glorot_uniform;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
            Activation::Sigmoid => {
                let y = if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                };
                // keep the open interval even when exp saturates
                y.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
            }
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Fully connected layer: `activation(x·W + b)` with `W` of shape `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub(crate) weights: Matrix,
    pub(crate) bias: Matrix,
    pub(crate) activation: Activation,
}

impl Dense {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if weights.cols() != bias.len() || weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::dim(
                "dense",
                format!("weights {:?} with {} biases", weights.shape(), bias.len()),
            ));
        }
        Ok(Dense {
            weights,
            bias: Matrix::row_vector(bias),
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(
        rng: &mut RngStream,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        let weights = glorot_uniform(rng, in_dim, out_dim)?;
        Dense::new(weights, vec![0.0; out_dim], activation)
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        self.bias.as_slice()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }
}

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;

/// Per-feature batch normalization with learned scale and shift.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub(crate) gamma: Matrix,
    pub(crate) beta: Matrix,
    pub(crate) running_mean: Vec<f64>,
    pub(crate) running_var: Vec<f64>,
    pub(crate) epsilon: f64,
    pub(crate) momentum: f64,
}

impl BatchNorm {
    /// γ = 1, β = 0, running mean 0, running variance 1.
    pub fn new(dim: usize, epsilon: f64, momentum: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("batch norm over zero features".into()));
        }
        if epsilon <= 0.0 || !(0.0..=1.0).contains(&momentum) {
            return Err(Error::Config(format!(
                "batch norm epsilon {epsilon} / momentum {momentum} out of range"
            )));
        }
        Ok(BatchNorm {
            gamma: Matrix::filled(1, dim, 1.0),
            beta: Matrix::zeros(1, dim),
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            epsilon,
            momentum,
        })
    }

    pub fn with_state(
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
        epsilon: f64,
        momentum: f64,
    ) -> Result<Self> {
        let dim = gamma.len();
        let mut bn = BatchNorm::new(dim, epsilon, momentum)?;
        if beta.len() != dim || running_mean.len() != dim || running_var.len() != dim {
            return Err(Error::dim("batch norm", "state vectors differ in length"));
        }
        if running_var.iter().any(|&v| v < 0.0) {
            return Err(Error::Config("negative running variance".into()));
        }
        bn.gamma = Matrix::row_vector(gamma);
        bn.beta = Matrix::row_vector(beta);
        bn.running_mean = running_mean;
        bn.running_var = running_var;
        Ok(bn)
    }

    pub fn dim(&self) -> usize {
        self.gamma.cols()
    }

    pub fn gamma(&self) -> &[f64] {
        self.gamma.as_slice()
    }

    pub fn beta(&self) -> &[f64] {
        self.beta.as_slice()
    }

    pub fn running_mean(&self) -> &[f64] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[f64] {
        &self.running_var
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }
}

/// Inverted dropout; parameter-free.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropout {
    pub(crate) rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Dropout { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn keep_prob(&self) -> f64 {
        1.0 - self.rate
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Dense(Dense),
    BatchNorm(BatchNorm),
    Dropout(Dropout),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub trainable: bool,
}

impl Layer {
    pub fn new(kind: LayerKind) -> Self {
        Layer {
            kind,
            trainable: true,
        }
    }

    pub fn dense(dense: Dense) -> Self {
        Layer::new(LayerKind::Dense(dense))
    }

    pub fn batch_norm(dim: usize) -> Result<Self> {
        Ok(Layer::new(LayerKind::BatchNorm(BatchNorm::new(
            dim,
            BN_EPSILON,
            BN_MOMENTUM,
        )?)))
    }

    pub fn dropout(rate: f64) -> Result<Self> {
        Ok(Layer::new(LayerKind::Dropout(Dropout::new(rate)?)))
    }

    pub fn frozen(mut self, frozen: bool) -> Self {
        self.trainable = !frozen;
        self
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            LayerKind::Dense(_) => "dense",
            LayerKind::BatchNorm(_) => "batchnorm",
            LayerKind::Dropout(_) => "dropout",
        }
    }

    /// Width this layer requires on its input, if it constrains one.
    pub fn required_input(&self) -> Option<usize> {
        match &self.kind {
            LayerKind::Dense(d) => Some(d.in_dim()),
            LayerKind::BatchNorm(b) => Some(b.dim()),
            LayerKind::Dropout(_) => None,
        }
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        match &self.kind {
            LayerKind::Dense(d) => d.out_dim(),
            _ => input_dim,
        }
    }

    /// Learnable parameters in canonical order (Dense: W, b; BatchNorm: γ, β).
    pub fn params(&self) -> Vec<&Matrix> {
        match &self.kind {
            LayerKind::Dense(d) => vec![&d.weights, &d.bias],
            LayerKind::BatchNorm(b) => vec![&b.gamma, &b.beta],
            LayerKind::Dropout(_) => Vec::new(),
        }
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Matrix> {
        match &mut self.kind {
            LayerKind::Dense(d) => vec![&mut d.weights, &mut d.bias],
            LayerKind::BatchNorm(b) => vec![&mut b.gamma, &mut b.beta],
            LayerKind::Dropout(_) => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn as_dense(&self) -> Option<&Dense> {
        match &self.kind {
            LayerKind::Dense(d) => Some(d),
            _ => None,
        }
    }

    pub fn as_batch_norm(&self) -> Option<&BatchNorm> {
        match &self.kind {
            LayerKind::BatchNorm(b) => Some(b),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_stays_open() {
        for z in [-1000.0, -40.0, 0.0, 40.0, 1000.0] {
            let y = Activation::Sigmoid.apply(z);
            assert!(y > 0.0 && y < 1.0, "sigmoid({z}) = {y}");
        }
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
    }

    #[test]
    fn relu_nonnegative() {
        assert_eq!(Activation::Relu.apply(-3.0), 0.0);
        assert_eq!(Activation::Relu.apply(2.5), 2.5);
    }

    #[test]
    fn dropout_rate_bounds() {
        assert!(Dropout::new(0.0).is_ok());
        assert!(Dropout::new(0.999).is_ok());
        assert!(Dropout::new(1.0).is_err());
        assert!(Dropout::new(-0.1).is_err());
    }

    #[test]
    fn dense_shape_checked() {
        assert!(Dense::new(Matrix::zeros(3, 2), vec![0.0; 3], Activation::Relu).is_err());
        let d = Dense::new(Matrix::zeros(3, 2), vec![0.0; 2], Activation::Relu).unwrap();
        assert_eq!((d.in_dim(), d.out_dim()), (3, 2));
        assert_eq!(Layer::dense(d).param_count(), 8);
    }

    #[test]
    fn batch_norm_defaults() {
        let bn = BatchNorm::new(4, BN_EPSILON, BN_MOMENTUM).unwrap();
        assert_eq!(bn.gamma(), &[1.0; 4]);
        assert_eq!(bn.beta(), &[0.0; 4]);
        assert_eq!(bn.running_var(), &[1.0; 4]);
        assert!(BatchNorm::new(4, 0.0, 0.9).is_err());
        assert!(
            BatchNorm::with_state(vec![1.0], vec![0.0], vec![0.0], vec![-1.0], 1e-5, 0.9).is_err()
        );
    }
}
