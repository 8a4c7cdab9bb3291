//! Dense row-major `f64` matrices.

use std::fmt;

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)?;
        if self.data.len() <= 64 {
            f.debug_list().entries(self.data.iter()).finish()?;
        }
        Ok(())
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "from_vec",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::dim(
                "from_rows",
                format!("row {bad} has {} entries, expected {cols}", rows[bad].len()),
            ));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    /// Single-row matrix.
    pub fn row_vector(values: Vec<f64>) -> Self {
        Matrix {
            rows: 1,
            cols: values.len(),
            data: values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_cols(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.rows);
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(indices.iter().map(|&c| row[c]));
        }
        Matrix {
            rows: self.rows,
            cols: indices.len(),
            data,
        }
    }

    /// Stack matrices with equal column counts vertically.
    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts {
            if m.cols != cols {
                return Err(Error::dim(
                    "vstack",
                    format!("{} columns vs {cols}", m.cols),
                ));
            }
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self × other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dim(
                "matmul",
                format!("{:?} x {:?}", self.shape(), other.shape()),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(self, false, other, false, &mut out);
        Ok(out)
    }

    /// `selfᵀ × other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::dim(
                "t_matmul",
                format!("{:?}ᵀ x {:?}", self.shape(), other.shape()),
            ));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        gemm(self, true, other, false, &mut out);
        Ok(out)
    }

    /// `self × otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::dim(
                "matmul_t",
                format!("{:?} x {:?}ᵀ", self.shape(), other.shape()),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        gemm(self, false, other, true, &mut out);
        Ok(out)
    }

    fn zip_with(
        &self,
        other: &Matrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                op,
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn add_scalar(&self, s: f64) -> Matrix {
        self.map(|v| v + s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    /// Adds `row` (length `cols`) to every row.
    pub fn add_row(&self, row: &[f64]) -> Result<Matrix> {
        if row.len() != self.cols {
            return Err(Error::dim(
                "add_row",
                format!("row of {} for {} columns", row.len(), self.cols),
            ));
        }
        let mut out = self.clone();
        for r in 0..out.rows {
            for (v, b) in out.row_mut(r).iter_mut().zip(row) {
                *v += b;
            }
        }
        Ok(out)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.sum() / self.data.len() as f64
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(r)) {
                *s += v;
            }
        }
        sums
    }

    pub fn col_means(&self) -> Vec<f64> {
        let n = self.rows.max(1) as f64;
        self.col_sums().into_iter().map(|s| s / n).collect()
    }

    /// Population (divisor n) per-column variance.
    pub fn col_variances(&self) -> Vec<f64> {
        let means = self.col_means();
        let mut acc = vec![0.0; self.cols];
        for r in 0..self.rows {
            for ((a, v), m) in acc.iter_mut().zip(self.row(r)).zip(&means) {
                let d = v - m;
                *a += d * d;
            }
        }
        let n = self.rows.max(1) as f64;
        acc.into_iter().map(|a| a / n).collect()
    }

    /// Per-column mean over entries whose `mask` slot is false.
    /// Columns with no unmasked entry yield `None`.
    pub fn col_means_unmasked(&self, mask: &[bool]) -> Result<Vec<Option<f64>>> {
        if mask.len() != self.data.len() {
            return Err(Error::dim(
                "col_means_unmasked",
                format!("mask of {} for {} values", mask.len(), self.data.len()),
            ));
        }
        let mut sums = vec![0.0; self.cols];
        let mut counts = vec![0usize; self.cols];
        for (i, (&v, &m)) in self.data.iter().zip(mask).enumerate() {
            if !m {
                sums[i % self.cols] += v;
                counts[i % self.cols] += 1;
            }
        }
        Ok(sums
            .into_iter()
            .zip(counts)
            .map(|(s, n)| (n > 0).then(|| s / n as f64))
            .collect())
    }

    /// Errors naming `op` if any entry is NaN or infinite.
    pub fn ensure_finite(&self, op: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { op: op.to_string() })
        }
    }

    pub fn rand_normal(
        rng: &mut RngStream,
        rows: usize,
        cols: usize,
        mean: f64,
        stdev: f64,
    ) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| {
                if stdev == 0.0 {
                    mean
                } else {
                    mean + stdev * rng.standard_normal()
                }
            })
            .collect();
        Matrix { rows, cols, data }
    }

    pub fn rand_uniform(
        rng: &mut RngStream,
        rows: usize,
        cols: usize,
        low: f64,
        high: f64,
    ) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| low + (high - low) * rng.uniform())
            .collect();
        Matrix { rows, cols, data }
    }

    /// Entries are 1 with probability `keep_prob`, else 0.
    pub fn bernoulli_mask(
        rng: &mut RngStream,
        rows: usize,
        cols: usize,
        keep_prob: f64,
    ) -> Result<Matrix> {
        if !(0.0..=1.0).contains(&keep_prob) {
            return Err(Error::Config(format!(
                "keep probability {keep_prob} outside [0, 1]"
            )));
        }
        let data = (0..rows * cols)
            .map(|_| if rng.uniform() < keep_prob { 1.0 } else { 0.0 })
            .collect();
        Ok(Matrix { rows, cols, data })
    }

    /// Largest elementwise absolute difference; `None` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> Option<f64> {
        (self.shape() == other.shape()).then(|| {
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
    }
}

/// `out = op(a) × op(b)` for row-major operands; shapes are checked by callers.
fn gemm(a: &Matrix, ta: bool, b: &Matrix, tb: bool, out: &mut Matrix) {
    let (m, k) = if ta {
        (a.cols, a.rows)
    } else {
        (a.rows, a.cols)
    };
    let n = if tb { b.rows } else { b.cols };
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let (rsa, csa) = if ta {
        (1, a.cols as isize)
    } else {
        (a.cols as isize, 1)
    };
    let (rsb, csb) = if tb {
        (1, b.cols as isize)
    } else {
        (b.cols as isize, 1)
    };
    // SAFETY: strides describe in-bounds row-major views of the operands and
    // `out` is an exclusively borrowed m×n buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            0.0,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_hand_case() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = m(&[&[1.0], &[1.0]]);
        assert_eq!(a.matmul(&b).unwrap(), m(&[&[3.0], &[7.0]]));
    }

    #[test]
    fn identity_is_neutral() {
        let mut rng = RngStream::new(1, 0);
        let x = Matrix::rand_normal(&mut rng, 3, 3, 0.0, 1.0);
        assert_eq!(Matrix::identity(3).matmul(&x).unwrap(), x);
    }

    #[test]
    fn ones_dot_product() {
        let k = 17;
        let a = Matrix::filled(1, k, 1.0);
        let b = Matrix::filled(k, 1, 1.0);
        assert_eq!(a.matmul(&b).unwrap(), Matrix::filled(1, 1, k as f64));
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(a.matmul(&a), Err(Error::Dimension { .. })));
    }

    #[test]
    fn transposed_products_agree() {
        let mut rng = RngStream::new(5, 0);
        let a = Matrix::rand_normal(&mut rng, 4, 3, 0.0, 1.0);
        let b = Matrix::rand_normal(&mut rng, 4, 5, 0.0, 1.0);
        let c = Matrix::rand_normal(&mut rng, 6, 3, 0.0, 1.0);
        let direct = a.transpose().matmul(&b).unwrap();
        assert!(a.t_matmul(&b).unwrap().max_abs_diff(&direct).unwrap() < 1e-12);
        let direct = a.matmul(&c.transpose()).unwrap();
        assert!(a.matmul_t(&c).unwrap().max_abs_diff(&direct).unwrap() < 1e-12);
    }

    #[test]
    fn rand_normal_zero_stdev() {
        let mut rng = RngStream::new(0, 0);
        assert_eq!(
            Matrix::rand_normal(&mut rng, 3, 4, 0.0, 0.0),
            Matrix::zeros(3, 4)
        );
        assert_eq!(
            Matrix::rand_normal(&mut rng, 2, 2, 1.5, 0.0),
            Matrix::filled(2, 2, 1.5)
        );
    }

    #[test]
    fn rand_normal_moments() {
        let mut rng = RngStream::new(2024, 3);
        let x = Matrix::rand_normal(&mut rng, 1000, 100, 0.0, 1.0);
        let mean = x.mean();
        let sd = (x.map(|v| (v - mean) * (v - mean)).sum() / (x.len() - 1) as f64).sqrt();
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((sd - 1.0).abs() < 0.02, "sd {sd}");
    }

    #[test]
    fn rand_normal_deterministic() {
        let a = Matrix::rand_normal(&mut RngStream::new(9, 4), 5, 5, 0.0, 1.0);
        let b = Matrix::rand_normal(&mut RngStream::new(9, 4), 5, 5, 0.0, 1.0);
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn bernoulli_extremes() {
        let mut rng = RngStream::new(0, 0);
        assert_eq!(
            Matrix::bernoulli_mask(&mut rng, 10, 10, 1.0).unwrap(),
            Matrix::filled(10, 10, 1.0)
        );
        assert_eq!(
            Matrix::bernoulli_mask(&mut rng, 10, 10, 0.0).unwrap(),
            Matrix::zeros(10, 10)
        );
        assert!(Matrix::bernoulli_mask(&mut rng, 1, 1, 1.5).is_err());
    }

    #[test]
    fn bernoulli_rate() {
        let mut rng = RngStream::new(77, 1);
        let mask = Matrix::bernoulli_mask(&mut rng, 1000, 1000, 0.9).unwrap();
        assert!(mask.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
        let frac = mask.mean();
        assert!((0.8985..=0.9015).contains(&frac), "fraction {frac}");
    }

    #[test]
    fn masked_column_means() {
        let x = m(&[&[1.0, 5.0], &[0.0, 7.0], &[3.0, 9.0]]);
        let mask = [false, true, true, true, false, true];
        let means = x.col_means_unmasked(&mask).unwrap();
        assert_eq!(means, vec![Some(2.0), None]);
    }

    #[test]
    fn finite_check_names_op() {
        let x = Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).unwrap();
        match x.ensure_finite("dense forward") {
            Err(Error::NonFinite { op }) => assert_eq!(op, "dense forward"),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn transpose_involution(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let x = Matrix::rand_normal(&mut RngStream::new(seed, 0), rows, cols, 0.0, 3.0);
            prop_assert_eq!(x.transpose().transpose(), x);
        }

        #[test]
        fn matmul_associative(a in 1usize..5, b in 1usize..5, c in 1usize..5, d in 1usize..5, seed in any::<u64>()) {
            let mut rng = RngStream::new(seed, 1);
            let x = Matrix::rand_normal(&mut rng, a, b, 0.0, 1.0);
            let y = Matrix::rand_normal(&mut rng, b, c, 0.0, 1.0);
            let z = Matrix::rand_normal(&mut rng, c, d, 0.0, 1.0);
            let left = x.matmul(&y).unwrap().matmul(&z).unwrap();
            let right = x.matmul(&y.matmul(&z).unwrap()).unwrap();
            let scale = left.as_slice().iter().fold(1.0f64, |s, v| s.max(v.abs()));
            prop_assert!(left.max_abs_diff(&right).unwrap() <= 1e-9 * scale);
        }
    }
}
