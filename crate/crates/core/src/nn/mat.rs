//! Dense row-major f64 matrices and the elementwise ops the model needs.

use crate::error::{Error, Result};
use rand::Rng;

/// Deterministic RNG used everywhere randomness is needed.
pub type DetRng = rand_chacha::ChaCha8Rng;

/// Row-major dense matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{}x{} matrix needs {} values, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Identity matrix of size n.
    pub fn eye(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// C = A * B. Shapes must agree; the error names both.
pub fn matmul(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut c = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let a_row = a.row(i);
        let c_row = c.row_mut(i);
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = b.row(k);
            for (j, &bkj) in b_row.iter().enumerate() {
                c_row[j] += aik * bkj;
            }
        }
    }
    Ok(c)
}

/// y = W x for a row slice x (length W.cols), returning a vector of length W.rows.
pub fn matvec(w: &Mat, x: &[f64]) -> Result<Vec<f64>> {
    if w.cols != x.len() {
        return Err(Error::Shape(format!(
            "matvec {}x{} by {}-vector",
            w.rows,
            w.cols,
            x.len()
        )));
    }
    let mut y = vec![0.0; w.rows];
    for (i, yi) in y.iter_mut().enumerate() {
        let row = w.row(i);
        let mut acc = 0.0;
        for (wij, xj) in row.iter().zip(x) {
            acc += wij * xj;
        }
        *yi = acc;
    }
    Ok(y)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn leaky_relu_scalar(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
pub fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        slope
    }
}

pub fn leaky_relu(x: &Mat, slope: f64) -> Mat {
    x.map(|v| leaky_relu_scalar(v, slope))
}

/// elu(x) = x for x >= 0, e^x - 1 otherwise.
#[inline]
pub fn elu_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

/// Derivative of ELU in terms of the pre-activation input.
#[inline]
pub fn elu_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        x.exp()
    }
}

pub fn elu(x: &Mat) -> Mat {
    x.map(elu_scalar)
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Mat) -> Mat {
    x.map(sigmoid_scalar)
}

/// Softmax over the `active` index set only; all other outputs are zero.
/// Scores are max-subtracted for stability.
pub fn masked_softmax(scores: &[f64], active: &[usize]) -> Result<Vec<f64>> {
    if active.is_empty() {
        return Err(Error::Argument("masked_softmax: empty active set".into()));
    }
    let mut max = f64::NEG_INFINITY;
    for &i in active {
        if i >= scores.len() {
            return Err(Error::Argument(format!(
                "masked_softmax: active index {} out of range {}",
                i,
                scores.len()
            )));
        }
        if scores[i] > max {
            max = scores[i];
        }
    }
    let mut out = vec![0.0; scores.len()];
    let mut sum = 0.0;
    for &i in active {
        let e = (scores[i] - max).exp();
        out[i] = e;
        sum += e;
    }
    for &i in active {
        out[i] /= sum;
    }
    Ok(out)
}

/// Inverted dropout. Eval mode is the identity; in training, each entry is
/// zeroed with probability p and survivors are scaled by 1/(1-p). The
/// returned mask holds the per-entry multiplier so the backward pass is an
/// elementwise product.
pub fn dropout(x: &Mat, p: f64, training: bool, rng: &mut DetRng) -> Result<(Mat, Mat)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Argument(format!(
            "dropout probability {} outside [0, 1)",
            p
        )));
    }
    let mut mask = Mat::zeros(x.rows, x.cols);
    if !training || p == 0.0 {
        mask.data.fill(1.0);
        return Ok((x.clone(), mask));
    }
    let scale = 1.0 / (1.0 - p);
    let mut out = x.clone();
    for (o, m) in out.data.iter_mut().zip(mask.data.iter_mut()) {
        if rng.random::<f64>() < p {
            *o = 0.0;
            *m = 0.0;
        } else {
            *o *= scale;
            *m = scale;
        }
    }
    Ok((out, mask))
}

/// Dropout over a plain slice; same semantics as [`dropout`].
pub fn dropout_vec(
    x: &[f64],
    p: f64,
    training: bool,
    rng: &mut DetRng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Argument(format!(
            "dropout probability {} outside [0, 1)",
            p
        )));
    }
    if !training || p == 0.0 {
        return Ok((x.to_vec(), vec![1.0; x.len()]));
    }
    let scale = 1.0 / (1.0 - p);
    let mut out = x.to_vec();
    let mut mask = vec![0.0; x.len()];
    for (o, m) in out.iter_mut().zip(mask.iter_mut()) {
        if rng.random::<f64>() < p {
            *o = 0.0;
        } else {
            *o *= scale;
            *m = scale;
        }
    }
    Ok((out, mask))
}
