//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use daeinit::evaluation::Confusion;
use daeinit::nn::{Activation, BatchNorm, Dense, Layer, LayerKind, Masks, Mode, Network};
use daeinit::{Matrix, RngStream};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Copy of `net` with one parameter entry shifted by `delta`. Parameters are
/// addressed in canonical order: dense weights then bias, batch-norm gamma
/// then beta.
pub fn perturbed(net: &Network, layer: usize, param: usize, index: usize, delta: f64) -> Network {
    let mut layers = net.layers().to_vec();
    let target = &mut layers[layer];
    target.kind = match &target.kind {
        LayerKind::Dense(d) => {
            let mut w = d.weights().clone();
            let mut b = d.bias().to_vec();
            match param {
                0 => w.as_mut_slice()[index] += delta,
                _ => b[index] += delta,
            }
            LayerKind::Dense(Dense::new(w, b, d.activation()).unwrap())
        }
        LayerKind::BatchNorm(bn) => {
            let mut g = bn.gamma().to_vec();
            let mut b = bn.beta().to_vec();
            match param {
                0 => g[index] += delta,
                _ => b[index] += delta,
            }
            LayerKind::BatchNorm(
                BatchNorm::with_state(
                    g,
                    b,
                    bn.running_mean().to_vec(),
                    bn.running_var().to_vec(),
                    bn.epsilon(),
                    bn.momentum(),
                )
                .unwrap(),
            )
        }
        other => panic!("layer {layer} has no parameters: {other:?}"),
    };
    Network::new(net.input_dim(), layers).unwrap()
}

/// `sum(output ⊙ r) / rows` in train mode with replayed dropout masks.
pub fn probe_loss(net: &Network, batch: &Matrix, masks: &[Option<Matrix>], r: &Matrix) -> f64 {
    let mut scratch = net.clone();
    let (out, _) = scratch
        .run(batch, Mode::Train, Masks::Fixed(masks))
        .unwrap();
    out.as_slice()
        .iter()
        .zip(r.as_slice())
        .map(|(o, w)| o * w)
        .sum::<f64>()
        / batch.rows() as f64
}

/// Zero pattern of every ReLU layer output, used to detect finite-difference
/// steps that straddle a kink.
fn relu_pattern(net: &Network, batch: &Matrix, masks: &[Option<Matrix>]) -> Vec<bool> {
    let mut pattern = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        let is_relu = layer
            .as_dense()
            .is_some_and(|d| d.activation() == Activation::Relu);
        if !is_relu {
            continue;
        }
        let mut prefix = Network::new(net.input_dim(), net.layers()[..=i].to_vec()).unwrap();
        let (out, _) = prefix
            .run(batch, Mode::Train, Masks::Fixed(&masks[..=i]))
            .unwrap();
        pattern.extend(out.as_slice().iter().map(|&v| v > 0.0));
    }
    pattern
}

#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub kinks: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

/// Denominator floor: gradients that vanish exactly (a bias feeding batch
/// norm) still carry up to ~1e-11 of finite-difference round-off.
pub const FD_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Central-difference check of every trainable parameter gradient.
pub fn gradient_check(net: &Network, batch: &Matrix, rng: &mut RngStream) -> GradCheck {
    let mut live = net.clone();
    let (out, tape) = live.forward(batch, Mode::Train, rng).unwrap();
    let masks = tape.masks();
    let r = Matrix::rand_normal(rng, out.rows(), out.cols(), 0.0, 1.0);
    let grads = live
        .backward(&tape, &r.scale(1.0 / batch.rows() as f64))
        .unwrap();
    // the forward above moved running statistics; train-mode outputs ignore them
    let base = live;

    let mut report = GradCheck::default();
    for (li, layer_grads) in grads.iter().enumerate() {
        let Some(layer_grads) = layer_grads else {
            assert!(
                !base.layers()[li].trainable || base.layers()[li].param_count() == 0,
                "trainable layer {li} has no gradient"
            );
            continue;
        };
        for (pi, g) in layer_grads.iter().enumerate() {
            for (idx, &analytic) in g.as_slice().iter().enumerate() {
                let plus = perturbed(&base, li, pi, idx, FD_STEP);
                let minus = perturbed(&base, li, pi, idx, -FD_STEP);
                if relu_pattern(&plus, batch, &masks) != relu_pattern(&minus, batch, &masks) {
                    report.kinks += 1;
                    continue;
                }
                let numeric = (probe_loss(&plus, batch, &masks, &r)
                    - probe_loss(&minus, batch, &masks, &r))
                    / (2.0 * FD_STEP);
                let err = relative_error(analytic, numeric);
                report.checked += 1;
                if err > report.max_rel_err {
                    report.max_rel_err = err;
                    report.worst = format!("layer {li} param {pi} entry {idx}: analytic {analytic:e} numeric {numeric:e}");
                }
            }
        }
    }
    report
}

/// Random layer stack mixing every layer kind, with a batch to feed it.
pub fn random_network(rng: &mut RngStream) -> (Network, Matrix) {
    let input_dim = 2 + (rng.next_u64() % 4) as usize;
    let depth = 2 + (rng.next_u64() % 4) as usize;
    let mut layers = Vec::new();
    let mut width = input_dim;
    for i in 0..depth {
        match rng.next_u64() % 3 {
            0 => {
                let out = 2 + (rng.next_u64() % 5) as usize;
                let act = [Activation::Relu, Activation::Sigmoid, Activation::Linear]
                    [(rng.next_u64() % 3) as usize];
                layers.push(Layer::dense(Dense::glorot(rng, width, out, act).unwrap()));
                width = out;
            }
            1 => layers.push(Layer::batch_norm(width).unwrap()),
            _ => layers.push(Layer::dropout(0.1 + 0.4 * rng.uniform()).unwrap()),
        }
        if i == 0 && rng.uniform() < 0.2 {
            let last = layers.len() - 1;
            layers[last].trainable = false;
        }
    }
    let act = [Activation::Sigmoid, Activation::Linear][(rng.next_u64() % 2) as usize];
    let out = 1 + (rng.next_u64() % 2) as usize;
    layers.push(Layer::dense(Dense::glorot(rng, width, out, act).unwrap()));
    // perturb batch-norm affine parameters away from the identity
    for layer in &mut layers {
        if let LayerKind::BatchNorm(bn) = &layer.kind {
            let d = bn.dim();
            let gamma = (0..d).map(|_| 0.5 + rng.uniform()).collect();
            let beta = (0..d).map(|_| rng.standard_normal() * 0.3).collect();
            layer.kind = LayerKind::BatchNorm(
                BatchNorm::with_state(
                    gamma,
                    beta,
                    vec![0.0; d],
                    vec![1.0; d],
                    bn.epsilon(),
                    bn.momentum(),
                )
                .unwrap(),
            );
        }
    }
    let rows = 4 + (rng.next_u64() % 5) as usize;
    let batch = Matrix::rand_normal(rng, rows, input_dim, 0.0, 1.0);
    (Network::new(input_dim, layers).unwrap(), batch)
}

/// Confusion counts by explicit enumeration of the four cases.
pub fn brute_confusion(pred: &[u8], truth: &[u8]) -> (usize, usize, usize, usize) {
    let mut counts = (0, 0, 0, 0);
    for i in 0..pred.len() {
        match (pred[i], truth[i]) {
            (1, 1) => counts.0 += 1,
            (1, 0) => counts.1 += 1,
            (0, 0) => counts.2 += 1,
            (0, 1) => counts.3 += 1,
            _ => unreachable!(),
        }
    }
    counts
}

pub fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Binary logistic regression on standardized features, full-batch gradient
/// descent. Returns the fitted scorer.
pub struct Logistic {
    mean: Vec<f64>,
    sd: Vec<f64>,
    w: Vec<f64>,
    b: f64,
}

impl Logistic {
    pub fn fit(x: &Matrix, y: &[u8], iterations: usize, step: f64) -> Logistic {
        let (n, d) = x.shape();
        let mean: Vec<f64> = (0..d)
            .map(|c| x.column(c).iter().sum::<f64>() / n as f64)
            .collect();
        let sd: Vec<f64> = (0..d)
            .map(|c| {
                let v = x
                    .column(c)
                    .iter()
                    .map(|v| (v - mean[c]).powi(2))
                    .sum::<f64>()
                    / n as f64;
                v.sqrt().max(1e-12)
            })
            .collect();
        let mut model = Logistic {
            mean,
            sd,
            w: vec![0.0; d],
            b: 0.0,
        };
        for _ in 0..iterations {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (r, &label) in y.iter().enumerate() {
                let z = model.standardized(x.row(r));
                let p = 1.0 / (1.0 + (-model.score(&z)).exp());
                let e = p - f64::from(label);
                for (g, v) in gw.iter_mut().zip(&z) {
                    *g += e * v;
                }
                gb += e;
            }
            for (w, g) in model.w.iter_mut().zip(&gw) {
                *w -= step * g / n as f64;
            }
            model.b -= step * gb / n as f64;
        }
        model
    }

    fn standardized(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn score(&self, z: &[f64]) -> f64 {
        self.b + z.iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict(&self, x: &Matrix) -> Vec<u8> {
        (0..x.rows())
            .map(|r| u8::from(self.score(&self.standardized(x.row(r))) >= 0.0))
            .collect()
    }
}

pub fn f1_of(pred: &[u8], truth: &[u8]) -> f64 {
    let (tp, fp, _, fn_) = brute_confusion(pred, truth);
    ratio(2 * tp, 2 * tp + fp + fn_)
}

/// Checks a [`Confusion`] against brute-force counting and textbook formulas.
pub fn confusion_matches(pred: &[u8], truth: &[u8]) -> bool {
    let c = Confusion::from_labels(pred, truth).unwrap();
    let (tp, fp, tn, fn_) = brute_confusion(pred, truth);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (c.tp, c.fp, c.tn, c.fn_) == (tp, fp, tn, fn_)
        && c.accuracy() == ratio(tp + tn, pred.len())
        && c.precision() == precision
        && c.recall() == recall
        && c.f1() == f1
        && (c.f1() - ratio(2 * tp, 2 * tp + fp + fn_)).abs() <= 1e-12
}

/// Plain triple-loop product.
pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a.get(i, k) * b.get(k, j);
            }
            out.set(i, j, s);
        }
    }
    out
}
