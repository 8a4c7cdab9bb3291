//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::network::{Gradients, Network};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

#[derive(Clone, Debug)]
struct Moments {
    first: Matrix,
    second: Matrix,
}

#[derive(Clone, Debug)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    /// Mirrors the gradient layout of the first step; `None` for layers that
    /// never receive gradients.
    moments: Option<Vec<Option<Vec<Moments>>>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            moments: None,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn check_layout(&self, grads: &Gradients) -> Result<()> {
        let Some(moments) = &self.moments else {
            return Ok(());
        };
        let same = moments.len() == grads.len()
            && moments.iter().zip(grads.iter()).all(|(m, g)| match (m, g) {
                (None, None) => true,
                (Some(m), Some(g)) => {
                    m.len() == g.len() && m.iter().zip(g).all(|(m, g)| m.first.shape() == g.shape())
                }
                _ => false,
            });
        if same {
            Ok(())
        } else {
            Err(Error::Training(
                "gradient layout changed between Adam steps".into(),
            ))
        }
    }

    /// Applies one update to every parameter that has a gradient.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        if grads.len() != net.layers().len() {
            return Err(Error::dim("adam", "gradient set does not match network"));
        }
        for (index, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                let params = net.layers()[index].params();
                if params.len() != g.len()
                    || params.iter().zip(g).any(|(p, g)| p.shape() != g.shape())
                {
                    return Err(Error::dim(
                        "adam",
                        format!("gradient shape mismatch at layer {index}"),
                    ));
                }
                if !net.layers()[index].trainable {
                    return Err(Error::Training(format!(
                        "gradient supplied for frozen layer {index}"
                    )));
                }
            }
        }
        self.check_layout(grads)?;
        let moments = self.moments.get_or_insert_with(|| {
            grads
                .iter()
                .map(|g| {
                    g.map(|g| {
                        g.iter()
                            .map(|p| Moments {
                                first: Matrix::zeros(p.rows(), p.cols()),
                                second: Matrix::zeros(p.rows(), p.cols()),
                            })
                            .collect()
                    })
                })
                .collect()
        });

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);

        for (index, (g, m)) in grads.iter().zip(moments.iter_mut()).enumerate() {
            let (Some(g), Some(m)) = (g, m) else { continue };
            for ((param, grad), mom) in net.params_mut(index).into_iter().zip(g).zip(m.iter_mut()) {
                let p = param.as_mut_slice();
                let first = mom.first.as_mut_slice();
                let second = mom.second.as_mut_slice();
                for (i, &gi) in grad.as_slice().iter().enumerate() {
                    first[i] = beta1 * first[i] + (1.0 - beta1) * gi;
                    second[i] = beta2 * second[i] + (1.0 - beta2) * gi * gi;
                    let m_hat = first[i] / correction1;
                    let v_hat = second[i] / correction2;
                    p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                }
                param.ensure_finite(&format!("adam update of layer {index}"))?;
            }
        }
        Ok(())
    }
}
