//! Scaled dot-product multi-head attention over row-stacked embeddings.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{dot, softmax, Tensor};

/// Projection weights for one attention block. The four matrices are full
/// (d_model, d_model) maps; head `h` reads columns [h·dh, (h+1)·dh) of the
/// query/key/value projections, dh = d_model / n_heads.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawAttentionParams")]
pub struct AttentionParams {
    pub d_model: usize,
    pub n_heads: usize,
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
}

#[derive(Deserialize)]
struct RawAttentionParams {
    d_model: usize,
    n_heads: usize,
    w_q: Tensor,
    w_k: Tensor,
    w_v: Tensor,
    w_o: Tensor,
}

impl TryFrom<RawAttentionParams> for AttentionParams {
    type Error = Error;

    fn try_from(raw: RawAttentionParams) -> Result<Self> {
        AttentionParams::new(raw.d_model, raw.n_heads, raw.w_q, raw.w_k, raw.w_v, raw.w_o)
    }
}

impl AttentionParams {
    pub fn new(
        d_model: usize,
        n_heads: usize,
        w_q: Tensor,
        w_k: Tensor,
        w_v: Tensor,
        w_o: Tensor,
    ) -> Result<Self> {
        if d_model == 0 || n_heads == 0 || d_model % n_heads != 0 {
            return Err(Error::arg(format!(
                "d_model {} not divisible into {} heads",
                d_model, n_heads
            )));
        }
        for (name, w) in [("w_q", &w_q), ("w_k", &w_k), ("w_v", &w_v), ("w_o", &w_o)] {
            if w.shape() != [d_model, d_model] {
                return Err(Error::shape(format!(
                    "{} must be ({}, {}), got {:?}",
                    name,
                    d_model,
                    d_model,
                    w.shape()
                )));
            }
        }
        Ok(AttentionParams { d_model, n_heads, w_q, w_k, w_v, w_o })
    }

    /// All four projections set to the identity.
    pub fn identity(d_model: usize, n_heads: usize) -> Result<Self> {
        let eye = eye(d_model);
        AttentionParams::new(d_model, n_heads, eye.clone(), eye.clone(), eye.clone(), eye)
    }

    /// Seeded normal initialization for all four projections.
    pub fn seeded(d_model: usize, n_heads: usize, std: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut mat = || random_matrix(d_model, d_model, std, rng);
        let (w_q, w_k, w_v) = (mat(), mat(), mat());
        let w_o = mat();
        AttentionParams::new(d_model, n_heads, w_q, w_k, w_v, w_o)
    }
}

/// Two-layer feed-forward block with ReLU: `relu(x·w1 + b1)·w2 + b2`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FfnParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl FfnParams {
    pub fn new(w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Result<Self> {
        if w1.rank() != 2 || w2.rank() != 2 || b1.rank() != 1 || b2.rank() != 1 {
            return Err(Error::shape("ffn weights must be 2-D, biases 1-D".to_string()));
        }
        if w1.shape()[1] != w2.shape()[0]
            || b1.shape()[0] != w1.shape()[1]
            || b2.shape()[0] != w2.shape()[1]
        {
            return Err(Error::shape(format!(
                "inconsistent ffn shapes: w1 {:?}, b1 {:?}, w2 {:?}, b2 {:?}",
                w1.shape(),
                b1.shape(),
                w2.shape(),
                b2.shape()
            )));
        }
        Ok(FfnParams { w1, b1, w2, b2 })
    }

    pub fn d_in(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.w2.shape()[1]
    }

    pub fn seeded(
        d_in: usize,
        hidden: usize,
        d_out: usize,
        std: f64,
        rng: &mut impl Rng,
    ) -> Self {
        FfnParams {
            w1: random_matrix(d_in, hidden, std, rng),
            b1: Tensor::zeros(vec![hidden]),
            w2: random_matrix(hidden, d_out, std, rng),
            b2: Tensor::zeros(vec![d_out]),
        }
    }

    /// The zero function: w2 = 0, so the block contributes nothing and a
    /// residual connection around it passes its input through unchanged.
    pub fn zeros(d_in: usize, hidden: usize, d_out: usize) -> Self {
        FfnParams {
            w1: Tensor::zeros(vec![d_in, hidden]),
            b1: Tensor::zeros(vec![hidden]),
            w2: Tensor::zeros(vec![hidden, d_out]),
            b2: Tensor::zeros(vec![d_out]),
        }
    }

    /// Exact identity through ReLU via the sign-split construction:
    /// hidden = [x⁺, x⁻], output column block j reassembles x⁺ − x⁻ = x.
    /// `copies` stacked blocks give d_out = copies·d_in.
    pub fn identity_passthrough(d_in: usize, copies: usize) -> Self {
        let hidden = 2 * d_in;
        let mut w1 = Tensor::zeros(vec![d_in, hidden]);
        for i in 0..d_in {
            w1.data_mut()[i * hidden + i] = 1.0;
            w1.data_mut()[i * hidden + d_in + i] = -1.0;
        }
        let d_out = copies * d_in;
        let mut w2 = Tensor::zeros(vec![hidden, d_out]);
        for c in 0..copies {
            for i in 0..d_in {
                w2.data_mut()[i * d_out + c * d_in + i] = 1.0;
                w2.data_mut()[(d_in + i) * d_out + c * d_in + i] = -1.0;
            }
        }
        FfnParams {
            w1,
            b1: Tensor::zeros(vec![hidden]),
            w2,
            b2: Tensor::zeros(vec![d_out]),
        }
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let hidden = crate::tensor::relu(&add_row_bias(&x.matmul(&self.w1)?, &self.b1));
        Ok(add_row_bias(&hidden.matmul(&self.w2)?, &self.b2))
    }
}

/// Single affine map `x·w + b` applied per row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearParams {
    pub w: Tensor,
    pub b: Tensor,
}

impl LinearParams {
    pub fn new(w: Tensor, b: Tensor) -> Result<Self> {
        if w.rank() != 2 || b.rank() != 1 || b.shape()[0] != w.shape()[1] {
            return Err(Error::shape(format!(
                "linear expects w[k,m], b[m]; got {:?}, {:?}",
                w.shape(),
                b.shape()
            )));
        }
        Ok(LinearParams { w, b })
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        LinearParams { w: Tensor::zeros(vec![d_in, d_out]), b: Tensor::zeros(vec![d_out]) }
    }

    pub fn seeded(d_in: usize, d_out: usize, std: f64, rng: &mut impl Rng) -> Self {
        LinearParams {
            w: random_matrix(d_in, d_out, std, rng),
            b: Tensor::zeros(vec![d_out]),
        }
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        Ok(add_row_bias(&x.matmul(&self.w)?, &self.b))
    }
}

pub(crate) fn add_row_bias(x: &Tensor, b: &Tensor) -> Tensor {
    let (n, m) = (x.shape()[0], x.shape()[1]);
    debug_assert_eq!(b.shape(), [m]);
    let mut out = x.clone();
    for i in 0..n {
        for j in 0..m {
            let v = out.get2(i, j) + b.data()[j];
            out.set2(i, j, v);
        }
    }
    out
}

/// Normalization applied after each residual connection. `Identity`
/// exists for analytically constructed configurations where layer
/// normalization would destroy the orthogonality arguments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    LayerNorm,
    Identity,
}

impl NormKind {
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            NormKind::LayerNorm => crate::tensor::layer_norm(x, 1e-5),
            NormKind::Identity => Ok(x.clone()),
        }
    }
}

pub fn eye(d: usize) -> Tensor {
    let mut t = Tensor::zeros(vec![d, d]);
    for i in 0..d {
        t.data_mut()[i * d + i] = 1.0;
    }
    t
}

pub(crate) fn random_matrix(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Tensor {
    let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
    Tensor::from_parts(
        vec![rows, cols],
        (0..rows * cols).map(|_| normal.sample(rng)).collect(),
    )
}

/// Multi-head scaled dot-product attention. `q` is [n_q, d_model], `k` and
/// `v` are [n_k, d_model]; per-head logits are scaled by 1/√(d_model/n_heads),
/// heads are concatenated and passed through the output projection.
pub fn attend(q: &Tensor, k: &Tensor, v: &Tensor, params: &AttentionParams) -> Result<Tensor> {
    let d = params.d_model;
    for (name, t) in [("q", q), ("k", k), ("v", v)] {
        if t.rank() != 2 || t.shape()[1] != d {
            return Err(Error::shape(format!(
                "{} must be [rows, {}], got {:?}",
                name,
                d,
                t.shape()
            )));
        }
    }
    if k.shape()[0] != v.shape()[0] {
        return Err(Error::shape(format!(
            "k has {} rows but v has {}",
            k.shape()[0],
            v.shape()[0]
        )));
    }
    let n_q = q.shape()[0];
    let n_k = k.shape()[0];
    if n_k == 0 {
        return Err(Error::arg("attend requires at least one key/value row"));
    }
    let qp = q.matmul(&params.w_q)?;
    let kp = k.matmul(&params.w_k)?;
    let vp = v.matmul(&params.w_v)?;
    let dh = d / params.n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut concat = Tensor::zeros(vec![n_q, d]);
    for h in 0..params.n_heads {
        let lo = h * dh;
        let hi = lo + dh;
        let mut logits = Tensor::zeros(vec![n_q, n_k]);
        for i in 0..n_q {
            let qi = &qp.row(i)[lo..hi];
            for j in 0..n_k {
                logits.set2(i, j, scale * dot(qi, &kp.row(j)[lo..hi]));
            }
        }
        let weights = softmax(&logits, 1)?;
        for i in 0..n_q {
            for j in 0..n_k {
                let a = weights.get2(i, j);
                let vj = &vp.row(j)[lo..hi];
                for (c, &vv) in vj.iter().enumerate() {
                    let cur = concat.get2(i, lo + c);
                    concat.set2(i, lo + c, cur + a * vv);
                }
            }
        }
    }
    concat.matmul(&params.w_o)
}
