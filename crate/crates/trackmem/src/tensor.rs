//! Dense f64 tensor kernel: row-major storage, explicit shapes, no
//! broadcasting. Every operation is a pure function; values are immutable
//! once exported. This is deliberately small: matmul, softmax, conv2d and
//! the two bilinear primitives are all the numerics the rest of the crate
//! needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense tensor of f64 values.
///
/// Invariant: `shape.iter().product() == data.len()`, and all values are
/// finite for tensors built through public constructors or deserialized
/// from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Unvalidated mirror used for deserialization; `try_from` enforces the
/// shape/length and finiteness invariants on every decode.
#[derive(Deserialize)]
struct RawTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<RawTensor> for Tensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Tensor> {
        Tensor::new(raw.shape, raw.data)
    }
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                expect,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::arg("tensor data contains NaN or Inf"));
        }
        Ok(Tensor { shape, data })
    }

    /// Internal constructor for values produced by our own arithmetic.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Tensor { shape, data }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn filled(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        Tensor { shape, data: vec![value; n] }
    }

    /// 2-D tensor from row slices; all rows must share one width.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::shape("rows of unequal width"));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Tensor::new(vec![rows.len(), width], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        Ok(Tensor { shape, data: self.data.clone() })
    }

    fn expect_rank(&self, rank: usize) -> Result<()> {
        if self.rank() != rank {
            return Err(Error::shape(format!(
                "expected rank-{} tensor, got shape {:?}",
                rank, self.shape
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn set2(&mut self, i: usize, j: usize, v: f64) {
        let w = self.shape[1];
        self.data[i * w + j] = v;
    }

    #[inline]
    pub fn get3(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.shape[1] + y) * self.shape[2] + x]
    }

    #[inline]
    pub fn set3(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let (h, w) = (self.shape[1], self.shape[2]);
        self.data[(c * h + y) * w + x] = v;
    }

    #[inline]
    pub fn get4(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let (s1, s2, s3) = (self.shape[1], self.shape[2], self.shape[3]);
        self.data[((a * s1 + b) * s2 + c) * s3 + d]
    }

    #[inline]
    pub fn set4(&mut self, a: usize, b: usize, c: usize, d: usize, v: f64) {
        let (s1, s2, s3) = (self.shape[1], self.shape[2], self.shape[3]);
        self.data[((a * s1 + b) * s2 + c) * s3 + d] = v;
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.shape[1];
        &self.data[i * w..(i + 1) * w]
    }

    pub fn transpose(&self) -> Result<Self> {
        self.expect_rank(2)?;
        let (n, m) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = self.data[i * m + j];
            }
        }
        Ok(Tensor::from_parts(vec![m, n], out))
    }

    pub fn matmul(&self, rhs: &Tensor) -> Result<Self> {
        self.expect_rank(2)?;
        rhs.expect_rank(2)?;
        let (n, k) = (self.shape[0], self.shape[1]);
        let (k2, m) = (rhs.shape[0], rhs.shape[1]);
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul {:?} x {:?}: inner dims differ",
                self.shape, rhs.shape
            )));
        }
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for l in 0..k {
                let a = self.data[i * k + l];
                if a == 0.0 {
                    continue;
                }
                let row = &rhs.data[l * m..(l + 1) * m];
                let dst = &mut out[i * m..(i + 1) * m];
                for j in 0..m {
                    dst[j] += a * row[j];
                }
            }
        }
        Ok(Tensor::from_parts(vec![n, m], out))
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Self> {
        if self.shape != rhs.shape {
            return Err(Error::shape(format!(
                "add {:?} + {:?}: shapes differ",
                self.shape, rhs.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn scale(&self, s: f64) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Concatenate along `axis`; all other extents must match.
    pub fn concat(a: &Tensor, b: &Tensor, axis: usize) -> Result<Self> {
        if a.rank() != b.rank() || axis >= a.rank() {
            return Err(Error::shape(format!(
                "concat {:?} | {:?} along axis {}",
                a.shape, b.shape, axis
            )));
        }
        for (i, (&ea, &eb)) in a.shape.iter().zip(&b.shape).enumerate() {
            if i != axis && ea != eb {
                return Err(Error::shape(format!(
                    "concat {:?} | {:?}: extent mismatch at axis {}",
                    a.shape, b.shape, i
                )));
            }
        }
        let outer: usize = a.shape[..axis].iter().product();
        let inner: usize = a.shape[axis + 1..].iter().product();
        let (la, lb) = (a.shape[axis], b.shape[axis]);
        let mut shape = a.shape.clone();
        shape[axis] = la + lb;
        let mut data = Vec::with_capacity(outer * (la + lb) * inner);
        for o in 0..outer {
            data.extend_from_slice(&a.data[o * la * inner..(o + 1) * la * inner]);
            data.extend_from_slice(&b.data[o * lb * inner..(o + 1) * lb * inner]);
        }
        Ok(Tensor { shape, data })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exp-normalize along `axis` with max-subtraction, so arbitrarily large
/// logits cannot overflow.
pub fn softmax(v: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= v.rank() {
        return Err(Error::arg(format!(
            "softmax axis {} out of range for shape {:?}",
            axis,
            v.shape()
        )));
    }
    let shape = v.shape().to_vec();
    let outer: usize = shape[..axis].iter().product();
    let lanes = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; v.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |l: usize| (o * lanes + l) * inner + i;
            let mut max = f64::NEG_INFINITY;
            for l in 0..lanes {
                max = max.max(v.data[at(l)]);
            }
            let mut sum = 0.0;
            for l in 0..lanes {
                let e = (v.data[at(l)] - max).exp();
                out[at(l)] = e;
                sum += e;
            }
            for l in 0..lanes {
                out[at(l)] /= sum;
            }
        }
    }
    Ok(Tensor::from_parts(shape, out))
}

/// Standard cross-correlation with zero padding.
/// Output extents: H' = ⌊(H + 2·pad − kh)/stride⌋ + 1, same for W'.
pub fn conv2d(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    if x.rank() != 3 || w.rank() != 4 || b.rank() != 1 {
        return Err(Error::shape(format!(
            "conv2d expects x[C,H,W], w[K,C,kh,kw], b[K]; got {:?}, {:?}, {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let (c_in, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (k_out, c_k, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    if c_k != c_in {
        return Err(Error::shape(format!(
            "conv2d channel mismatch: input {} vs kernel {}",
            c_in, c_k
        )));
    }
    if b.shape()[0] != k_out {
        return Err(Error::shape(format!(
            "conv2d bias length {} vs {} output channels",
            b.shape()[0],
            k_out
        )));
    }
    if stride == 0 {
        return Err(Error::arg("conv2d stride must be positive"));
    }
    if kh > h + 2 * pad || kw > wd + 2 * pad {
        return Err(Error::arg(format!(
            "conv2d kernel {}x{} larger than padded input {}x{}",
            kh,
            kw,
            h + 2 * pad,
            wd + 2 * pad
        )));
    }
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = Tensor::zeros(vec![k_out, oh, ow]);
    for k in 0..k_out {
        let bias = b.data()[k];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias;
                for c in 0..c_in {
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            acc += w.get4(k, c, ky, kx) * x.get3(c, iy as usize, ix as usize);
                        }
                    }
                }
                out.set3(k, oy, ox, acc);
            }
        }
    }
    Ok(out)
}

/// Align-corners-false bilinear resize: source coordinate for output index
/// `o` is `(o + 0.5)·(in/out) − 0.5`, clamped to the valid range, so a
/// constant field stays constant and factor 1 is an exact copy.
pub fn bilinear_resize(x: &Tensor, factor: f64) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(Error::shape(format!(
            "bilinear_resize expects x[C,H,W], got {:?}",
            x.shape()
        )));
    }
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::arg("bilinear_resize factor must be positive"));
    }
    let (c_n, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let oh = (h as f64 * factor).floor() as usize;
    let ow = (w as f64 * factor).floor() as usize;
    if oh == 0 || ow == 0 {
        return Err(Error::arg(format!(
            "bilinear_resize factor {} yields empty output for {}x{}",
            factor, h, w
        )));
    }
    let src = |o: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let s = (o as f64 + 0.5) * (n_in as f64 / n_out as f64) - 0.5;
        let s = s.clamp(0.0, (n_in - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Tensor::zeros(vec![c_n, oh, ow]);
    for c in 0..c_n {
        for oy in 0..oh {
            let (y0, y1, fy) = src(oy, h, oh);
            for ox in 0..ow {
                let (x0, x1, fx) = src(ox, w, ow);
                // Lerp form keeps constant fields bit-exact.
                let top = {
                    let a = x.get3(c, y0, x0);
                    a + fx * (x.get3(c, y0, x1) - a)
                };
                let bot = {
                    let a = x.get3(c, y1, x0);
                    a + fx * (x.get3(c, y1, x1) - a)
                };
                out.set3(c, oy, ox, top + fy * (bot - top));
            }
        }
    }
    Ok(out)
}

/// Bilinear interpolation of `x` at arbitrary (y, x) positions, one output
/// column per point. Neighbors outside [0,H−1]×[0,W−1] contribute zero,
/// matching the zero-padded convolution convention.
pub fn bilinear_sample(x: &Tensor, points: &[(f64, f64)]) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(Error::shape(format!(
            "bilinear_sample expects x[C,H,W], got {:?}",
            x.shape()
        )));
    }
    let (c_n, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = Tensor::zeros(vec![c_n, points.len()]);
    for (p, &(py, px)) in points.iter().enumerate() {
        let y0 = py.floor();
        let x0 = px.floor();
        let (fy, fx) = (py - y0, px - x0);
        let taps = [
            (y0, x0, (1.0 - fy) * (1.0 - fx)),
            (y0, x0 + 1.0, (1.0 - fy) * fx),
            (y0 + 1.0, x0, fy * (1.0 - fx)),
            (y0 + 1.0, x0 + 1.0, fy * fx),
        ];
        for c in 0..c_n {
            let mut acc = 0.0;
            for &(ty, tx, wt) in &taps {
                if wt == 0.0 || ty < 0.0 || tx < 0.0 || ty > (h - 1) as f64 || tx > (w - 1) as f64
                {
                    continue;
                }
                acc += wt * x.get3(c, ty as usize, tx as usize);
            }
            out.set2(c, p, acc);
        }
    }
    Ok(out)
}

/// Per-row layer normalization of a 2-D tensor (population variance, no
/// learned gain/bias).
pub fn layer_norm(x: &Tensor, eps: f64) -> Result<Tensor> {
    if x.rank() != 2 {
        return Err(Error::shape(format!(
            "layer_norm expects a 2-D tensor, got {:?}",
            x.shape()
        )));
    }
    let (n, d) = (x.shape()[0], x.shape()[1]);
    if d == 0 {
        return Err(Error::arg("layer_norm on zero-width rows"));
    }
    let mut out = Tensor::zeros(vec![n, d]);
    for i in 0..n {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for j in 0..d {
            out.set2(i, j, (row[j] - mean) * inv);
        }
    }
    Ok(out)
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape().to_vec(),
        data: x.data().iter().map(|v| v.max(0.0)).collect(),
    }
}
