//! Row-major f64 matrix with the handful of kernels the trainer needs.
//!
//! The layout is chosen so every inner loop streams contiguous memory in
//! axpy form (scalar times row added to row), which the compiler turns into
//! wide FMA code. That matters: the batched forward/backward passes are
//! where effectively all training time goes.

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// Transposed copy.
    pub fn transposed(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            let src = self.row(r);
            for (c, &v) in src.iter().enumerate() {
                t.data[c * self.rows + r] = v;
            }
        }
        t
    }
}

/// y += a * x, elementwise over equal-length slices.
#[inline]
pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yv, &xv) in y.iter_mut().zip(x.iter()) {
        *yv += a * xv;
    }
}

/// out = x * wt + bias broadcast, where x is (batch, in), wt is (in, out).
///
/// The inner loop runs across the output row, so each input scalar fans out
/// with one contiguous axpy.
pub fn matmul_bias(x: &Matrix, wt: &Matrix, bias: &[f64], out: &mut Matrix) {
    assert_eq!(x.cols(), wt.rows());
    assert_eq!(wt.cols(), bias.len());
    assert_eq!(out.rows(), x.rows());
    assert_eq!(out.cols(), wt.cols());
    for b in 0..x.rows() {
        let xr = x.row(b);
        let yr = out.row_mut(b);
        yr.copy_from_slice(bias);
        for (i, &xv) in xr.iter().enumerate() {
            if xv != 0.0 {
                axpy(yr, xv, wt.row(i));
            }
        }
    }
}

/// out = d * w, where d is (batch, out_dim) and w is (out_dim, in_dim).
/// Used to push gradients back to the previous layer's activations.
pub fn matmul(d: &Matrix, w: &Matrix, out: &mut Matrix) {
    assert_eq!(d.cols(), w.rows());
    assert_eq!(out.rows(), d.rows());
    assert_eq!(out.cols(), w.cols());
    out.fill(0.0);
    for b in 0..d.rows() {
        let dr = d.row(b);
        let yr = out.row_mut(b);
        for (o, &dv) in dr.iter().enumerate() {
            if dv != 0.0 {
                axpy(yr, dv, w.row(o));
            }
        }
    }
}

/// acc += d^T * x, where d is (batch, out_dim), x is (batch, in_dim) and
/// acc is (out_dim, in_dim). Accumulates weight gradients over a batch.
pub fn accumulate_outer(d: &Matrix, x: &Matrix, acc: &mut Matrix) {
    assert_eq!(d.rows(), x.rows());
    assert_eq!(acc.rows(), d.cols());
    assert_eq!(acc.cols(), x.cols());
    for b in 0..d.rows() {
        let dr = d.row(b);
        let xr = x.row(b);
        for (o, &dv) in dr.iter().enumerate() {
            if dv != 0.0 {
                axpy(acc.row_mut(o), dv, xr);
            }
        }
    }
}
