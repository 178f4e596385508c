//! Dense row-major `f64` matrices.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense, row-major matrix of finite 64-bit floats.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        Matrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            if r > 0 {
                write!(f, "; ")?;
            }
            for (i, v) in self.row(r).iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v}")?;
            }
        }
        write!(f, "]")
    }
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::new",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        check_finite("Matrix::new", &data)?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from its rows. All rows must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(
                    "Matrix::from_rows",
                    format!("row {i} has {} entries, expected {cols}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(value.is_finite(), "fill value must be finite");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 1.0)
    }

    pub fn scalar(value: f64) -> Self {
        Self::filled(1, 1, value)
    }

    /// Row vector `1 x n`.
    pub fn row_vector(values: &[f64]) -> Result<Self> {
        Self::new(1, values.len(), values.to_vec())
    }

    /// One-hot rows for the given class indices.
    pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Self> {
        let mut m = Self::zeros(labels.len(), num_classes);
        for (i, &y) in labels.iter().enumerate() {
            if y >= num_classes {
                return Err(Error::InvalidArgument(format!(
                    "label {y} at position {i} is outside [0, {num_classes})"
                )));
            }
            m.data[i * num_classes + y] = 1.0;
        }
        Ok(m)
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Single-entry value of a `1 x 1` matrix.
    pub fn item(&self) -> Result<f64> {
        if self.shape() != (1, 1) {
            return Err(Error::shape(
                "Matrix::item",
                format!("{}x{} is not a scalar", self.rows, self.cols),
            ));
        }
        Ok(self.data[0])
    }

    /// Selects the given rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::shape(
                    "Matrix::select_rows",
                    format!("row {i} of {}", self.rows),
                ));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        })
    }

    /// Concatenates columns of `self` and `other`.
    pub fn hconcat(&self, other: &Matrix) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::shape(
                "Matrix::hconcat",
                format!("{} rows vs {} rows", self.rows, other.rows),
            ));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Self {
            rows: self.rows,
            cols,
            data,
        })
    }

    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows).map(|r| argmax(self.row(r))).collect()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn same_shape(&self, op: &'static str, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                op,
                format!(
                    "{}x{} vs {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        Ok(())
    }

    fn zip_with(
        &self,
        op: &'static str,
        other: &Matrix,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        self.same_shape(op, other)?;
        let data: Vec<f64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        check_finite(op, &data)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Applies `f` elementwise; fails if any result is non-finite.
    pub fn map(&self, op: &'static str, f: impl Fn(f64) -> f64) -> Result<Self> {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        check_finite(op, &data)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn add(&self, other: &Matrix) -> Result<Self> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Self> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Self> {
        self.zip_with("mul", other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        self.map("scale", |v| v * c)
    }

    pub fn add_scalar(&self, c: f64) -> Result<Self> {
        self.map("add_scalar", |v| v + c)
    }

    pub fn relu(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v.max(0.0)).collect(),
        }
    }

    /// Heaviside step: 1 where the entry is positive, else 0.
    pub fn step(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn sigmoid(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| sigmoid(v)).collect(),
        }
    }

    pub fn exp(&self) -> Result<Self> {
        self.map("exp", f64::exp)
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!(
                    "{}x{} times {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            let out = &mut data[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[p * m..(p + 1) * m];
                for (o, &b) in out.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        check_finite("matmul", &data)?;
        Ok(Self {
            rows: n,
            cols: m,
            data,
        })
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// Adds the `1 x cols` row vector `bias` to every row.
    pub fn add_row(&self, bias: &Matrix) -> Result<Self> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(Error::shape(
                "add_row",
                format!(
                    "{}x{} plus row {}x{}",
                    self.rows, self.cols, bias.rows, bias.cols
                ),
            ));
        }
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.cols) {
            for (v, b) in row.iter_mut().zip(&bias.data) {
                *v += b;
            }
        }
        check_finite("add_row", &data)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Repeats a `1 x m` row `n` times.
    pub fn broadcast_rows(&self, n: usize) -> Result<Self> {
        if self.rows != 1 {
            return Err(Error::shape(
                "broadcast_rows",
                format!("expected a row vector, got {}x{}", self.rows, self.cols),
            ));
        }
        let mut data = Vec::with_capacity(n * self.cols);
        for _ in 0..n {
            data.extend_from_slice(&self.data);
        }
        Ok(Self {
            rows: n,
            cols: self.cols,
            data,
        })
    }

    /// Repeats an `n x 1` column `m` times.
    pub fn broadcast_cols(&self, m: usize) -> Result<Self> {
        if self.cols != 1 {
            return Err(Error::shape(
                "broadcast_cols",
                format!("expected a column vector, got {}x{}", self.rows, self.cols),
            ));
        }
        let mut data = Vec::with_capacity(self.rows * m);
        for &v in &self.data {
            data.extend(std::iter::repeat_n(v, m));
        }
        Ok(Self {
            rows: self.rows,
            cols: m,
            data,
        })
    }

    /// Fills an `r x c` matrix with the value of a `1 x 1` matrix.
    pub fn broadcast_scalar(&self, rows: usize, cols: usize) -> Result<Self> {
        Ok(Self::filled(rows, cols, self.item()?))
    }

    /// Column sums as a `1 x cols` row.
    pub fn sum_rows(&self) -> Self {
        let mut data = vec![0.0; self.cols];
        for row in self.data.chunks_exact(self.cols.max(1)) {
            for (s, v) in data.iter_mut().zip(row) {
                *s += v;
            }
        }
        Self {
            rows: 1,
            cols: self.cols,
            data,
        }
    }

    /// Row sums as a `rows x 1` column.
    pub fn sum_cols(&self) -> Self {
        let data = (0..self.rows).map(|r| self.row(r).iter().sum()).collect();
        Self {
            rows: self.rows,
            cols: 1,
            data,
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Per-row `log Σ exp`, computed with max subtraction.
    pub fn logsumexp_rows(&self) -> Result<Self> {
        let data: Vec<f64> = (0..self.rows).map(|r| logsumexp(self.row(r))).collect();
        check_finite("logsumexp", &data)?;
        Ok(Self {
            rows: self.rows,
            cols: 1,
            data,
        })
    }

    /// Row-wise softmax.
    pub fn softmax_rows(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.rows {
            data.extend(softmax(self.row(r)));
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = logsumexp(xs);
    xs.iter().map(|&x| (x - lse).exp()).collect()
}

/// Index of the first maximal entry.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_multiply() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let i = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(a.matmul(&i).unwrap(), a);
    }

    #[test]
    fn rejects_bad_length_and_nan() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(matches!(
            Matrix::new(1, 1, vec![f64::NAN]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn overflow_is_reported() {
        let m = Matrix::scalar(1000.0);
        assert!(matches!(m.exp(), Err(Error::NonFinite { op: "exp" })));
    }

    #[test]
    fn logsumexp_is_stable() {
        let m = Matrix::from_rows(&[[1000.0, 1000.0]]).unwrap();
        let l = m.logsumexp_rows().unwrap().item().unwrap();
        assert!((l - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn deserialize_checks_shape() {
        let bad = r#"{"rows":2,"cols":2,"data":[1.0]}"#;
        assert!(serde_json::from_str::<Matrix>(bad).is_err());
        let good = r#"{"rows":1,"cols":2,"data":[1.5,-2.0]}"#;
        let m: Matrix = serde_json::from_str(good).unwrap();
        assert_eq!(m.data(), &[1.5, -2.0]);
    }
}
