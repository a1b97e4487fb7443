use std::fmt;

use super::NumericError;

/// Dense row-major matrix of `f64`.
///
/// Every constructor and operation rejects non-finite entries, so a `Tensor`
/// that exists always holds finite values.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor({}x{}) [", self.rows, self.cols)?;
        for r in 0..self.rows {
            if r > 0 {
                write!(f, "; ")?;
            }
            for (c, v) in self.row(r).iter().enumerate() {
                if c > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v}")?;
            }
        }
        write!(f, "]")
    }
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<(), NumericError> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NumericError::NonFinite { op })
    }
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericError> {
        if data.len() != rows * cols {
            return Err(NumericError::Length {
                rows,
                cols,
                len: data.len(),
            });
        }
        check_finite("new", &data)?;
        Ok(Self { rows, cols, data })
    }

    /// Internal constructor for results of operations; validates finiteness.
    pub(crate) fn from_op(
        op: &'static str,
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    ) -> Result<Self, NumericError> {
        debug_assert_eq!(data.len(), rows * cols);
        check_finite(op, &data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Result<Self, NumericError> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn scalar(value: f64) -> Result<Self, NumericError> {
        Self::new(1, 1, vec![value])
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Builds a tensor from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, NumericError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(NumericError::Length {
                    rows: rows.len(),
                    cols,
                    len: data.len() + r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
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

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Writes one entry. Fails if the value is not finite.
    pub fn set(&mut self, r: usize, c: usize, value: f64) -> Result<(), NumericError> {
        if !value.is_finite() {
            return Err(NumericError::NonFinite { op: "set" });
        }
        self.data[r * self.cols + c] = value;
        Ok(())
    }

    /// Returns the only entry of a 1x1 tensor.
    pub fn item(&self) -> Result<f64, NumericError> {
        if self.shape() != (1, 1) {
            return Err(NumericError::NotScalar {
                shape: self.shape(),
            });
        }
        Ok(self.data[0])
    }

    /// Gathers the given rows into a new tensor.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
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

    /// Applies `f` entrywise, validating the result.
    pub fn map(&self, op: &'static str, f: impl Fn(f64) -> f64) -> Result<Self, NumericError> {
        Self::from_op(op, self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(
        &self,
        op: &'static str,
        other: &Tensor,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, NumericError> {
        self.expect_same_shape(op, other)?;
        Self::from_op(
            op,
            self.rows,
            self.cols,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub(crate) fn expect_same_shape(
        &self,
        op: &'static str,
        other: &Tensor,
    ) -> Result<(), NumericError> {
        if self.shape() != other.shape() {
            return Err(NumericError::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Row-wise argmax; ties resolve to the lowest column index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|r| {
                let row = self.row(r);
                let mut best = 0;
                for (c, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Tensor) -> Result<Self, NumericError> {
        if self.cols != other.rows {
            return Err(NumericError::Shape {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let out = gemm(
            self.rows,
            self.cols,
            other.cols,
            &self.data,
            (self.cols as isize, 1),
            &other.data,
            (other.cols as isize, 1),
        );
        Self::from_op("matmul", self.rows, other.cols, out)
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_bt(&self, other: &Tensor) -> Result<Self, NumericError> {
        if self.cols != other.cols {
            return Err(NumericError::Shape {
                op: "matmul_bt",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let out = gemm(
            self.rows,
            self.cols,
            other.rows,
            &self.data,
            (self.cols as isize, 1),
            &other.data,
            (1, other.cols as isize),
        );
        Self::from_op("matmul_bt", self.rows, other.rows, out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn matmul_at(&self, other: &Tensor) -> Result<Self, NumericError> {
        if self.rows != other.rows {
            return Err(NumericError::Shape {
                op: "matmul_at",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let out = gemm(
            self.cols,
            self.rows,
            other.cols,
            &self.data,
            (1, self.cols as isize),
            &other.data,
            (other.cols as isize, 1),
        );
        Self::from_op("matmul_at", self.cols, other.cols, out)
    }

    /// Broadcast-adds a `1 x cols` row vector to every row.
    pub fn add_rowvec(&self, bias: &Tensor) -> Result<Self, NumericError> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(NumericError::Shape {
                op: "add_rowvec",
                left: self.shape(),
                right: bias.shape(),
            });
        }
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.cols.max(1)) {
            for (v, b) in row.iter_mut().zip(&bias.data) {
                *v += b;
            }
        }
        Self::from_op("add_rowvec", self.rows, self.cols, data)
    }

    /// Column sums as a `1 x cols` tensor.
    pub fn sum_rows(&self) -> Self {
        let mut data = vec![0.0; self.cols];
        for row in self.data.chunks(self.cols.max(1)) {
            for (acc, v) in data.iter_mut().zip(row) {
                *acc += v;
            }
        }
        Self {
            rows: 1,
            cols: self.cols,
            data,
        }
    }

    pub fn relu(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        }
    }

    pub fn sigmoid(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| stable_sigmoid(v)).collect(),
        }
    }

    /// Row-wise log-softmax, stabilized by subtracting the row maximum.
    pub fn log_softmax(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.rows {
            let row = self.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
            data.extend(row.iter().map(|&v| v - lse));
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v.clamp(lo, hi)).collect(),
        }
    }
}

pub(crate) fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `C = A · B` with `A: m x k`, `B: k x n`, arbitrary strides on the inputs.
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: the strides describe in-bounds layouts of `a` (m x k) and
    // `b` (k x n) as checked by the callers' shape tests, and `c` is a fresh
    // row-major m x n buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}
