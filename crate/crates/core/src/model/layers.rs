//! Differentiable building blocks with explicit backward passes.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub(crate) const LN_EPS: f64 = 1e-5;

/// `y = x W + b`, `W: in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub w: Matrix<T>,
    pub b: Matrix<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Matrix::zeros(input, output),
            b: Matrix::zeros(1, output),
        }
    }

    /// Normal weights with standard deviation `gain / sqrt(in)`, zero bias.
    pub fn random(input: usize, output: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let std = gain / (input as f64).sqrt();
        Self {
            w: Matrix::from_fn(input, output, |_, _| T::c(std * rng.sample::<f64, _>(StandardNormal))),
            b: Matrix::zeros(1, output),
        }
    }

    pub fn forward(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut y = x.matmul(&self.w);
        y.add_row_broadcast(self.b.as_slice());
        y
    }

    /// Accumulate parameter gradients into `grad`; return `dL/dx`.
    pub fn backward(&self, x: &Matrix<T>, dy: &Matrix<T>, grad: &mut Linear<T>) -> Matrix<T> {
        self.accumulate(x, dy, grad);
        dy.matmul_nt(&self.w)
    }

    /// Parameter gradients only (input gradient not needed).
    pub fn accumulate(&self, x: &Matrix<T>, dy: &Matrix<T>, grad: &mut Linear<T>) {
        grad.w.add_assign(&x.matmul_tn(dy));
        for (g, s) in grad.b.as_mut_slice().iter_mut().zip(dy.column_sums()) {
            *g += s;
        }
    }

    pub(crate) fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix<T>)>) {
        out.push((format!("{prefix}.w"), &self.w));
        out.push((format!("{prefix}.b"), &self.b));
    }

    pub(crate) fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Matrix<T>>) {
        out.push(&mut self.w);
        out.push(&mut self.b);
    }
}

/// Per-row layer normalization with learned gain and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm<T> {
    pub gain: Matrix<T>,
    pub bias: Matrix<T>,
}

pub struct LayerNormCache<T> {
    normalized: Matrix<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            gain: Matrix::filled(1, dim, T::one()),
            bias: Matrix::zeros(1, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            gain: Matrix::zeros(1, dim),
            bias: Matrix::zeros(1, dim),
        }
    }

    pub fn forward(&self, x: &Matrix<T>) -> (Matrix<T>, LayerNormCache<T>) {
        let (n, d) = x.shape();
        let dn = T::c(d as f64);
        let mut normalized = Matrix::zeros(n, d);
        let mut y = Matrix::zeros(n, d);
        let mut inv_std = Vec::with_capacity(n);
        let (g, b) = (self.gain.as_slice(), self.bias.as_slice());
        for i in 0..n {
            let row = x.row(i);
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let inv = T::one() / (var + T::c(LN_EPS)).sqrt();
            inv_std.push(inv);
            let nr = normalized.row_mut(i);
            for (o, &v) in nr.iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
            let nr = normalized.row(i).to_vec();
            for (k, o) in y.row_mut(i).iter_mut().enumerate() {
                *o = nr[k] * g[k] + b[k];
            }
        }
        (y, LayerNormCache { normalized, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache<T>, dy: &Matrix<T>, grad: &mut LayerNorm<T>) -> Matrix<T> {
        let (n, d) = dy.shape();
        let dn = T::c(d as f64);
        let g = self.gain.as_slice();
        let mut dx = Matrix::zeros(n, d);
        for i in 0..n {
            let xh = cache.normalized.row(i);
            let dyr = dy.row(i);
            {
                let gg = grad.gain.as_mut_slice();
                for k in 0..d {
                    gg[k] += dyr[k] * xh[k];
                }
            }
            {
                let gb = grad.bias.as_mut_slice();
                for k in 0..d {
                    gb[k] += dyr[k];
                }
            }
            let mut mean_d = T::zero();
            let mut mean_dx = T::zero();
            for k in 0..d {
                let dxh = dyr[k] * g[k];
                mean_d += dxh;
                mean_dx += dxh * xh[k];
            }
            mean_d /= dn;
            mean_dx /= dn;
            let inv = cache.inv_std[i];
            for (k, o) in dx.row_mut(i).iter_mut().enumerate() {
                *o = inv * (dyr[k] * g[k] - mean_d - xh[k] * mean_dx);
            }
        }
        dx
    }

    pub(crate) fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix<T>)>) {
        out.push((format!("{prefix}.gain"), &self.gain));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    pub(crate) fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Matrix<T>>) {
        out.push(&mut self.gain);
        out.push(&mut self.bias);
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `x * sigmoid(x)`.
pub fn silu<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    x.map(|v| v * sigmoid(v))
}

/// `dy * d silu(x) / dx`.
pub fn silu_backward<T: Scalar>(x: &Matrix<T>, dy: &Matrix<T>) -> Matrix<T> {
    x.zip_map(dy, |v, d| {
        let s = sigmoid(v);
        d * s * (T::one() + v * (T::one() - s))
    })
}

/// Row-wise softmax, max-shifted.
pub fn softmax_rows<T: Scalar>(s: &mut Matrix<T>) {
    for i in 0..s.rows() {
        let row = s.row_mut(i);
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Gradient through a row-wise softmax with output `p`.
pub fn softmax_backward<T: Scalar>(p: &Matrix<T>, dp: &Matrix<T>) -> Matrix<T> {
    let mut ds = Matrix::zeros(p.rows(), p.cols());
    for i in 0..p.rows() {
        let (pr, dr) = (p.row(i), dp.row(i));
        let dot: T = pr.iter().zip(dr).map(|(&a, &b)| a * b).sum();
        for (k, o) in ds.row_mut(i).iter_mut().enumerate() {
            *o = pr[k] * (dr[k] - dot);
        }
    }
    ds
}

/// Sinusoidal encoding of `position` in `dim` (even) channels.
pub fn sinusoid<T: Scalar>(position: f64, dim: usize) -> Vec<T> {
    let half = dim / 2;
    let mut out = vec![T::zero(); dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        out[2 * i] = T::c((position * freq).sin());
        out[2 * i + 1] = T::c((position * freq).cos());
    }
    out
}

/// Positional encodings for frames `0..n`.
pub fn positional_encoding<T: Scalar>(n: usize, dim: usize) -> Matrix<T> {
    let mut m = Matrix::zeros(n, dim);
    for i in 0..n {
        m.row_mut(i).copy_from_slice(&sinusoid::<T>(i as f64, dim));
    }
    m
}

/// Copy columns `[start, start + width)` into a new matrix.
pub fn columns<T: Scalar>(m: &Matrix<T>, start: usize, width: usize) -> Matrix<T> {
    Matrix::from_fn(m.rows(), width, |i, j| m.get(i, start + j))
}

/// Write `block` into columns starting at `start`.
pub fn put_columns<T: Scalar>(m: &mut Matrix<T>, start: usize, block: &Matrix<T>) {
    for i in 0..block.rows() {
        m.row_mut(i)[start..start + block.cols()].copy_from_slice(block.row(i));
    }
}
