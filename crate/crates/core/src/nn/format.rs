//! `DAEPT v1`: line-oriented text format for network parameters.
//!
//! ```text
//! DAEPT v1
//! meta <key> <value>            (zero or more)
//! input_dim <n>
//! layer dropout trainable=<0|1> rate=<f>
//! layer dense trainable=<0|1> in=<n> out=<m> activation=<relu|sigmoid|linear>
//! weights
//! <n lines of m values>
//! bias
//! <m values>
//! layer batchnorm trainable=<0|1> dim=<n> epsilon=<f> momentum=<f>
//! gamma / beta / running_mean / running_var, each a label line then one line of n values
//! end
//! ```
//!
//! Reals are written with 17 significant digits so 64-bit values round-trip exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::layer::{Activation, BatchNorm, Dense, Dropout, Layer, LayerKind};
use crate::nn::network::Network;

pub const HEADER: &str = "DAEPT v1";

/// Decimal with 17 significant digits.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_values(out: &mut String, values: &[f64]) {
    let line: Vec<String> = values.iter().map(|&v| format_real(v)).collect();
    out.push_str(&line.join(" "));
    out.push('\n');
}

pub fn write_network(net: &Network, meta: &[(String, String)]) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for (k, v) in meta {
        let _ = writeln!(out, "meta {k} {v}");
    }
    let _ = writeln!(out, "input_dim {}", net.input_dim());
    for layer in net.layers() {
        let trainable = u8::from(layer.trainable);
        match &layer.kind {
            LayerKind::Dropout(d) => {
                let _ = writeln!(
                    out,
                    "layer dropout trainable={trainable} rate={}",
                    format_real(d.rate())
                );
            }
            LayerKind::Dense(d) => {
                let _ = writeln!(
                    out,
                    "layer dense trainable={trainable} in={} out={} activation={}",
                    d.in_dim(),
                    d.out_dim(),
                    d.activation()
                );
                out.push_str("weights\n");
                for r in 0..d.in_dim() {
                    push_values(&mut out, d.weights().row(r));
                }
                out.push_str("bias\n");
                push_values(&mut out, d.bias());
            }
            LayerKind::BatchNorm(b) => {
                let _ = writeln!(
                    out,
                    "layer batchnorm trainable={trainable} dim={} epsilon={} momentum={}",
                    b.dim(),
                    format_real(b.epsilon()),
                    format_real(b.momentum())
                );
                for (label, values) in [
                    ("gamma", b.gamma()),
                    ("beta", b.beta()),
                    ("running_mean", b.running_mean()),
                    ("running_var", b.running_var()),
                ] {
                    out.push_str(label);
                    out.push('\n');
                    push_values(&mut out, values);
                }
            }
        }
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.iter.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.trim_end())
            }
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Format {
            line: self.line,
            message: message.into(),
        }
    }

    fn expect(&mut self, label: &str) -> Result<()> {
        let l = self.next()?;
        if l == label {
            Ok(())
        } else {
            Err(self.err(format!("expected `{label}`, found `{l}`")))
        }
    }

    fn values(&mut self, count: usize) -> Result<Vec<f64>> {
        let l = self.next()?;
        let values = l
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| self.err(format!("bad number `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != count {
            return Err(self.err(format!("expected {count} values, found {}", values.len())));
        }
        Ok(values)
    }

    fn labelled(&mut self, label: &str, count: usize) -> Result<Vec<f64>> {
        self.expect(label)?;
        self.values(count)
    }
}

fn fields<'a>(lines: &Lines<'_>, tokens: &[&'a str]) -> Result<BTreeMap<&'a str, &'a str>> {
    tokens
        .iter()
        .map(|t| {
            t.split_once('=')
                .ok_or_else(|| lines.err(format!("expected key=value, found `{t}`")))
        })
        .collect()
}

fn field<'a, T: std::str::FromStr>(
    lines: &Lines<'_>,
    map: &BTreeMap<&'a str, &'a str>,
    key: &str,
) -> Result<T> {
    map.get(key)
        .ok_or_else(|| lines.err(format!("missing `{key}`")))?
        .parse()
        .map_err(|_| lines.err(format!("bad value for `{key}`")))
}

/// Parses a `DAEPT v1` document into the network and its `meta` entries.
pub fn read_network(text: &str) -> Result<(Network, Vec<(String, String)>)> {
    let mut lines = Lines {
        iter: text.lines().enumerate(),
        line: 0,
    };
    lines.expect(HEADER)?;
    let mut meta = Vec::new();
    let mut line = lines.next()?;
    while let Some(rest) = line.strip_prefix("meta ") {
        let (k, v) = rest
            .split_once(' ')
            .ok_or_else(|| lines.err("meta line needs a key and a value"))?;
        meta.push((k.to_string(), v.to_string()));
        line = lines.next()?;
    }
    let input_dim: usize = line
        .strip_prefix("input_dim ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| lines.err("expected `input_dim <n>`"))?;

    let mut layers = Vec::new();
    loop {
        let line = lines.next()?;
        if line == "end" {
            break;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 2 || tokens[0] != "layer" {
            return Err(lines.err(format!("expected a layer header, found `{line}`")));
        }
        let map = fields(&lines, &tokens[2..])?;
        let trainable = match map.get("trainable") {
            Some(&"1") => true,
            Some(&"0") => false,
            _ => return Err(lines.err("`trainable` must be 0 or 1")),
        };
        let kind = match tokens[1] {
            "dropout" => LayerKind::Dropout(Dropout::new(field(&lines, &map, "rate")?)?),
            "dense" => {
                let in_dim: usize = field(&lines, &map, "in")?;
                let out_dim: usize = field(&lines, &map, "out")?;
                let activation: Activation = field(&lines, &map, "activation")?;
                lines.expect("weights")?;
                let mut w = Vec::with_capacity(in_dim * out_dim);
                for _ in 0..in_dim {
                    w.extend(lines.values(out_dim)?);
                }
                let bias = lines.labelled("bias", out_dim)?;
                LayerKind::Dense(Dense::new(
                    Matrix::from_vec(in_dim, out_dim, w)?,
                    bias,
                    activation,
                )?)
            }
            "batchnorm" => {
                let dim: usize = field(&lines, &map, "dim")?;
                let epsilon: f64 = field(&lines, &map, "epsilon")?;
                let momentum: f64 = field(&lines, &map, "momentum")?;
                let gamma = lines.labelled("gamma", dim)?;
                let beta = lines.labelled("beta", dim)?;
                let rm = lines.labelled("running_mean", dim)?;
                let rv = lines.labelled("running_var", dim)?;
                LayerKind::BatchNorm(BatchNorm::with_state(
                    gamma, beta, rm, rv, epsilon, momentum,
                )?)
            }
            other => return Err(lines.err(format!("unknown layer kind `{other}`"))),
        };
        layers.push(Layer { kind, trainable });
    }
    Ok((Network::new(input_dim, layers)?, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn sample_net() -> Network {
        let mut rng = RngStream::new(12, 0);
        let mut bn = BatchNorm::new(4, 1e-5, 0.99).unwrap();
        bn.running_mean = vec![0.1, -0.2, 1.0 / 3.0, 7e-300];
        bn.running_var = vec![1.5, 2.0, 0.25, std::f64::consts::PI];
        Network::new(
            3,
            vec![
                Layer::dropout(0.1).unwrap(),
                Layer::dense(Dense::glorot(&mut rng, 3, 4, Activation::Relu).unwrap()).frozen(true),
                Layer::new(LayerKind::BatchNorm(bn)),
                Layer::dense(Dense::glorot(&mut rng, 4, 1, Activation::Sigmoid).unwrap()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let net = sample_net();
        let meta = vec![("epochs".to_string(), "100".to_string())];
        let text = write_network(&net, &meta);
        assert!(text.starts_with("DAEPT v1\n"));
        let (back, meta_back) = read_network(&text).unwrap();
        assert_eq!(back.layers(), net.layers());
        assert_eq!(meta_back, meta);
        assert_eq!(write_network(&back, &meta_back), text);
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_real(0.1), "1.0000000000000001e-1");
        for v in [
            0.1,
            1.0 / 3.0,
            -2.5e-310,
            123_456_789.123_456_79,
            f64::MIN_POSITIVE,
        ] {
            assert_eq!(
                format_real(v).parse::<f64>().unwrap().to_bits(),
                v.to_bits()
            );
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = write_network(&sample_net(), &[]);
        let broken = text.replacen("bias\n", "bias\nnot-a-number ", 1);
        match read_network(&broken) {
            Err(Error::Format { line, .. }) => assert!(line > 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_network("DAEPT v2\n").is_err());
        assert!(read_network(&text.replace("end\n", "")).is_err());
    }
}
