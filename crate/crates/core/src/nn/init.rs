use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::RngStream;

/// Glorot/Xavier uniform: entries drawn from `U(-l, l)` with `l = sqrt(6 / (in + out))`.
pub fn glorot_uniform(rng: &mut RngStream, in_dim: usize, out_dim: usize) -> Result<Matrix> {
    if in_dim == 0 || out_dim == 0 {
        return Err(Error::Config(format!(
            "glorot init needs positive dims, got {in_dim}x{out_dim}"
        )));
    }
    let limit = glorot_limit(in_dim, out_dim);
    Ok(Matrix::rand_uniform(rng, in_dim, out_dim, -limit, limit))
}

pub fn glorot_limit(in_dim: usize, out_dim: usize) -> f64 {
    (6.0 / (in_dim + out_dim) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn within_bound() {
        let w = glorot_uniform(&mut RngStream::new(1, 2), 30, 20).unwrap();
        let l = glorot_limit(30, 20);
        assert!(w.as_slice().iter().all(|v| v.abs() <= l));
    }

    #[test]
    fn variance_matches_uniform() {
        // Var(U(-l, l)) = l²/3 = 2 / (in + out)
        let (i, o) = (250, 400);
        let w = glorot_uniform(&mut RngStream::new(8, 0), i, o).unwrap();
        let mean = w.mean();
        let var = w.map(|v| (v - mean).powi(2)).sum() / w.len() as f64;
        let expected = 2.0 / (i + o) as f64;
        assert!(
            (var / expected - 1.0).abs() < 0.05,
            "var {var} vs {expected}"
        );
    }

    #[test]
    fn deterministic_per_stream() {
        let a = glorot_uniform(&mut RngStream::new(4, 4), 5, 3).unwrap();
        let b = glorot_uniform(&mut RngStream::new(4, 4), 5, 3).unwrap();
        let c = glorot_uniform(&mut RngStream::new(4, 5), 5, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_dim_rejected() {
        assert!(glorot_uniform(&mut RngStream::new(0, 0), 0, 3).is_err());
    }
}
