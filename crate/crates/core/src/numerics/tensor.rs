//! Row-major dense matrices of `f64`.
//!
//! Everything in the model is a 2-D tensor: vectors are `1×k` rows, node
//! feature blocks are `N×d`. 32-bit floats only appear in feature files.

use serde::{Deserialize, Serialize};

use super::NumericsError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::Length {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a tensor from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, NumericsError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(NumericsError::Length {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Largest absolute elementwise difference. Shapes must agree.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Plain matrix product `self · other`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, NumericsError> {
        if self.cols != other.rows {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Tensor::zeros(self.rows, other.cols);
        gemm(&mut out, self, false, other, false, 0.0);
        Ok(out)
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Index of the largest entry of row `r`; ties go to the lowest index.
    pub fn argmax_row(&self, r: usize) -> usize {
        let row = self.row(r);
        let mut best = 0;
        for (i, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = i;
            }
        }
        best
    }
}

/// `out = op(a) · op(b) + beta · out`, where `op` optionally transposes.
pub(crate) fn gemm(out: &mut Tensor, a: &Tensor, trans_a: bool, b: &Tensor, trans_b: bool, beta: f64) {
    let (m, k) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (k2, n) = if trans_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, k2, "gemm inner dimension");
    assert_eq!(out.shape(), (m, n), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for x in out.data.iter_mut() {
            *x *= beta;
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, a.cols) } else { (a.cols, 1) };
    let (rsb, csb) = if trans_b { (1, b.cols) } else { (b.cols, 1) };
    // SAFETY: strides and extents describe exactly the backing buffers,
    // whose lengths are rows*cols by construction.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa as isize,
            csa as isize,
            b.data.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            out.data.as_mut_ptr(),
            out.cols as isize,
            1,
        );
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(z: &Tensor) -> Tensor {
    let mut out = z.clone();
    for r in 0..z.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        for x in row.iter_mut() {
            *x /= total;
        }
    }
    out
}

/// Softmax of a single `1×k` row.
pub fn softmax_vec(z: &Tensor) -> Result<Tensor, NumericsError> {
    if z.rows() != 1 || z.cols() == 0 {
        return Err(NumericsError::ShapeMismatch {
            op: "softmax_vec",
            left: z.shape(),
            right: (1, z.cols().max(1)),
        });
    }
    Ok(softmax_rows(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_naive() {
        let a = Tensor::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let b = Tensor::from_rows(&[[1.0, 0.5], [-1.0, 2.0], [0.0, 1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[-1.0, 7.5, -1.0, 18.0]);
        assert!(b.matmul(&b).is_err());
    }

    #[test]
    fn transposed_gemm() {
        let a = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let mut out = Tensor::zeros(2, 2);
        gemm(&mut out, &a, true, &a, false, 0.0);
        let expected = a.transpose().matmul(&a).unwrap();
        assert_eq!(out, expected);
        let mut out = Tensor::zeros(3, 3);
        gemm(&mut out, &a, false, &a, true, 0.0);
        assert_eq!(out, a.matmul(&a.transpose()).unwrap());
    }

    #[test]
    fn softmax_examples() {
        let p = softmax_vec(&Tensor::row_vector(&[0.0, 0.0])).unwrap();
        assert_eq!(p.data(), &[0.5, 0.5]);
        let p = softmax_vec(&Tensor::row_vector(&[3.7])).unwrap();
        assert_eq!(p.data(), &[1.0]);
        let p = softmax_vec(&Tensor::row_vector(&[1000.0, 1000.0, 1000.0])).unwrap();
        for &x in p.data() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(softmax_vec(&Tensor::zeros(2, 2)).is_err());
    }

    #[test]
    fn argmax_ties_to_lowest() {
        let t = Tensor::row_vector(&[1.0, 3.0, 3.0, 0.0]);
        assert_eq!(t.argmax_row(0), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_sums_to_one_and_is_shift_invariant(
                z in proptest::collection::vec(-50.0f64..50.0, 1..12),
                c in -100.0f64..100.0,
            ) {
                let p = softmax_vec(&Tensor::row_vector(&z)).unwrap();
                prop_assert!((p.sum() - 1.0).abs() < 1e-12);
                let shifted: Vec<f64> = z.iter().map(|x| x + c).collect();
                let q = softmax_vec(&Tensor::row_vector(&shifted)).unwrap();
                prop_assert!(p.max_abs_diff(&q) < 1e-12);
            }
        }
    }
}
