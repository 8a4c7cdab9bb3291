//! Layer stacks with forward and backward passes.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::layer::{Layer, LayerKind};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, batch norm uses batch statistics and updates its running ones.
    Train,
    /// No corruption, batch norm uses running statistics.
    Eval,
}

/// Where dropout masks come from during a forward pass.
pub enum Masks<'a> {
    Sample(&'a mut RngStream),
    /// Replay masks captured by an earlier tape (see [`Tape::masks`]).
    Fixed(&'a [Option<Matrix>]),
}

#[derive(Clone, Debug)]
enum Cache {
    Dense {
        input: Matrix,
        output: Matrix,
    },
    BatchNorm {
        normalized: Matrix,
        inv_std: Vec<f64>,
    },
    /// Scaled keep mask; `None` when the layer acted as identity.
    Dropout {
        mask: Option<Matrix>,
    },
}

/// Activations cached by a forward pass, consumed by [`Network::backward`].
#[derive(Clone, Debug)]
pub struct Tape {
    version: u64,
    mode: Mode,
    rows: usize,
    caches: Vec<Cache>,
}

impl Tape {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Dropout masks in layer order (`None` for non-dropout layers or identity passes).
    pub fn masks(&self) -> Vec<Option<Matrix>> {
        self.caches
            .iter()
            .map(|c| match c {
                Cache::Dropout { mask } => mask.clone(),
                _ => None,
            })
            .collect()
    }
}

/// Parameter gradients, one slot per layer. Slots are `None` for frozen and
/// parameter-free layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    layers: Vec<Option<Vec<Matrix>>>,
}

impl Gradients {
    pub fn new(layers: Vec<Option<Vec<Matrix>>>) -> Self {
        Gradients { layers }
    }

    pub fn layer(&self, index: usize) -> Option<&[Matrix]> {
        self.layers.get(index).and_then(|g| g.as_deref())
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<&[Matrix]>> {
        self.layers.iter().map(|g| g.as_deref())
    }

    pub fn all_zero(&self) -> bool {
        self.layers
            .iter()
            .flatten()
            .flatten()
            .all(|m| m.as_slice().iter().all(|&v| v == 0.0))
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    input_dim: usize,
    layers: Vec<Layer>,
    /// Bumped by every train-mode forward and every parameter update, so a
    /// tape can be matched to the exact state that produced it.
    version: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.input_dim == other.input_dim && self.layers == other.layers
    }
}

impl Network {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Config("network input width is zero".into()));
        }
        let mut width = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if let Some(required) = layer.required_input() {
                if required != width {
                    return Err(Error::dim(
                        "network",
                        format!(
                            "layer {i} ({}) expects {required} inputs, previous width is {width}",
                            layer.kind_name()
                        ),
                    ));
                }
            }
            width = layer.output_dim(width);
        }
        Ok(Network {
            input_dim,
            layers,
            version: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .iter()
            .fold(self.input_dim, |w, l| l.output_dim(w))
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn set_trainable(&mut self, layer: usize, trainable: bool) {
        self.layers[layer].trainable = trainable;
    }

    pub(crate) fn params_mut(&mut self, layer: usize) -> Vec<&mut Matrix> {
        self.version += 1;
        self.layers[layer].params_mut()
    }

    pub fn forward(
        &mut self,
        batch: &Matrix,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<(Matrix, Tape)> {
        self.run(batch, mode, Masks::Sample(rng))
    }

    /// Eval-mode forward without touching any state.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        let mut scratch = self.clone();
        let mut unused = RngStream::new(0, 0);
        scratch
            .run(batch, Mode::Eval, Masks::Sample(&mut unused))
            .map(|(out, _)| out)
    }

    pub fn run(
        &mut self,
        batch: &Matrix,
        mode: Mode,
        mut masks: Masks<'_>,
    ) -> Result<(Matrix, Tape)> {
        if batch.cols() != self.input_dim {
            return Err(Error::dim(
                "forward",
                format!(
                    "batch has {} columns, network expects {}",
                    batch.cols(),
                    self.input_dim
                ),
            ));
        }
        if batch.rows() == 0 {
            return Err(Error::Data("forward on an empty batch".into()));
        }
        if let Masks::Fixed(fixed) = &masks {
            if fixed.len() != self.layers.len() {
                return Err(Error::dim(
                    "forward",
                    "fixed mask list does not match layer count",
                ));
            }
        }
        if mode == Mode::Train {
            self.version += 1;
        }
        let rows = batch.rows();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for (index, layer) in self.layers.iter_mut().enumerate() {
            let (out, cache) = match &mut layer.kind {
                LayerKind::Dense(d) => {
                    let mut z = x.matmul(&d.weights)?.add_row(d.bias.as_slice())?;
                    let act = d.activation;
                    z.map_inplace(|v| act.apply(v));
                    z.ensure_finite(&format!("dense layer {index} forward"))?;
                    let cache = Cache::Dense {
                        input: x,
                        output: z.clone(),
                    };
                    (z, cache)
                }
                LayerKind::Dropout(drop) => {
                    let mask = match (mode, &mut masks) {
                        (Mode::Eval, _) => None,
                        (Mode::Train, _) if drop.rate == 0.0 => None,
                        (Mode::Train, Masks::Sample(rng)) => {
                            let keep = drop.keep_prob();
                            Some(
                                Matrix::bernoulli_mask(rng, rows, x.cols(), keep)?
                                    .scale(1.0 / keep),
                            )
                        }
                        (Mode::Train, Masks::Fixed(fixed)) => fixed[index].clone(),
                    };
                    let out = match &mask {
                        Some(m) => x.mul(m)?,
                        None => x,
                    };
                    (out, Cache::Dropout { mask })
                }
                LayerKind::BatchNorm(bn) => {
                    let (mean, var) = match mode {
                        Mode::Train => (x.col_means(), x.col_variances()),
                        Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
                    };
                    let inv_std: Vec<f64> =
                        var.iter().map(|v| 1.0 / (v + bn.epsilon).sqrt()).collect();
                    let mut normalized = x;
                    for r in 0..rows {
                        for ((v, m), s) in normalized.row_mut(r).iter_mut().zip(&mean).zip(&inv_std)
                        {
                            *v = (*v - m) * s;
                        }
                    }
                    let mut out = normalized.clone();
                    let (gamma, beta) = (bn.gamma.as_slice(), bn.beta.as_slice());
                    for r in 0..rows {
                        for ((v, g), b) in out.row_mut(r).iter_mut().zip(gamma).zip(beta) {
                            *v = *v * g + b;
                        }
                    }
                    out.ensure_finite(&format!("batch norm layer {index} forward"))?;
                    if mode == Mode::Train {
                        let m = bn.momentum;
                        for (rm, bm) in bn.running_mean.iter_mut().zip(&mean) {
                            *rm = m * *rm + (1.0 - m) * bm;
                        }
                        for (rv, bv) in bn.running_var.iter_mut().zip(&var) {
                            *rv = m * *rv + (1.0 - m) * bv;
                        }
                    }
                    (
                        out,
                        Cache::BatchNorm {
                            normalized,
                            inv_std,
                        },
                    )
                }
            };
            caches.push(cache);
            x = out;
        }
        let tape = Tape {
            version: self.version,
            mode,
            rows,
            caches,
        };
        Ok((x, tape))
    }

    /// Gradients of the loss for every trainable parameter, given
    /// `d loss / d output` for the batch that produced `tape`.
    pub fn backward(&self, tape: &Tape, loss_grad: &Matrix) -> Result<Gradients> {
        if tape.version != self.version || tape.caches.len() != self.layers.len() {
            return Err(Error::Training(
                "stale tape: network changed since the forward pass".into(),
            ));
        }
        if tape.mode != Mode::Train {
            return Err(Error::Training("backward needs a train-mode tape".into()));
        }
        if loss_grad.shape() != (tape.rows, self.output_dim()) {
            return Err(Error::dim(
                "backward",
                format!(
                    "loss gradient {:?}, expected {:?}",
                    loss_grad.shape(),
                    (tape.rows, self.output_dim())
                ),
            ));
        }
        let mut grads: Vec<Option<Vec<Matrix>>> = vec![None; self.layers.len()];
        let mut upstream = loss_grad.clone();
        for (index, (layer, cache)) in self.layers.iter().zip(&tape.caches).enumerate().rev() {
            let need_input_grad = index > 0;
            match (&layer.kind, cache) {
                (LayerKind::Dense(d), Cache::Dense { input, output }) => {
                    let act = d.activation;
                    let dz = Matrix::from_vec(
                        upstream.rows(),
                        upstream.cols(),
                        upstream
                            .as_slice()
                            .iter()
                            .zip(output.as_slice())
                            .map(|(&g, &y)| g * act.derivative_at_output(y))
                            .collect(),
                    )?;
                    if layer.trainable {
                        let dw = input.t_matmul(&dz)?;
                        let db = Matrix::row_vector(dz.col_sums());
                        grads[index] = Some(vec![dw, db]);
                    }
                    if need_input_grad {
                        upstream = dz.matmul_t(&d.weights)?;
                    }
                }
                (LayerKind::Dropout(_), Cache::Dropout { mask }) => {
                    if let Some(m) = mask {
                        upstream = upstream.mul(m)?;
                    }
                }
                (
                    LayerKind::BatchNorm(bn),
                    Cache::BatchNorm {
                        normalized,
                        inv_std,
                    },
                ) => {
                    let n = upstream.rows() as f64;
                    let dim = bn.dim();
                    let gamma = bn.gamma.as_slice();
                    let mut sum_dy = vec![0.0; dim];
                    let mut sum_dy_xhat = vec![0.0; dim];
                    for r in 0..upstream.rows() {
                        for c in 0..dim {
                            let dy = upstream.get(r, c);
                            sum_dy[c] += dy;
                            sum_dy_xhat[c] += dy * normalized.get(r, c);
                        }
                    }
                    if need_input_grad {
                        let mut dx = Matrix::zeros(upstream.rows(), dim);
                        for r in 0..upstream.rows() {
                            for c in 0..dim {
                                let dxhat = upstream.get(r, c) * gamma[c];
                                let v = inv_std[c] / n
                                    * (n * dxhat
                                        - gamma[c] * sum_dy[c]
                                        - normalized.get(r, c) * gamma[c] * sum_dy_xhat[c]);
                                dx.set(r, c, v);
                            }
                        }
                        upstream = dx;
                    }
                    if layer.trainable {
                        grads[index] = Some(vec![
                            Matrix::row_vector(sum_dy_xhat),
                            Matrix::row_vector(sum_dy),
                        ]);
                    }
                }
                _ => {
                    return Err(Error::Training(format!(
                        "tape entry {index} does not match layer kind"
                    )))
                }
            }
            upstream.ensure_finite(&format!("layer {index} backward"))?;
        }
        Ok(Gradients { layers: grads })
    }
}
