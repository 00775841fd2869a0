//! Candidate proposal network: a transformer encoder over the
//! sequentialized frame feature map and a decoder over learned object
//! queries, emitting per-frame proposal embeddings, boxes and objectness.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{attend, AttentionParams, FfnParams, LinearParams, NormKind};
use crate::boxes::BoxCwh;
use crate::error::{Error, Result};
use crate::tensor::{sigmoid, Tensor};

/// One decoded candidate: embedding row plus sigmoid box/objectness heads.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Proposal {
    pub embedding: Tensor,
    pub bbox: BoxCwh,
    pub objectness: f64,
}

impl Proposal {
    pub fn new(embedding: Tensor, bbox: BoxCwh, objectness: f64) -> Result<Self> {
        if embedding.rank() != 1 {
            return Err(Error::shape("proposal embedding must be 1-D".to_string()));
        }
        let inside = [bbox.cx, bbox.cy, bbox.w, bbox.h]
            .iter()
            .all(|v| (0.0..=1.0).contains(v));
        if !inside {
            return Err(Error::arg(format!("proposal box out of [0,1]: {:?}", bbox)));
        }
        if !(0.0..=1.0).contains(&objectness) {
            return Err(Error::arg(format!("objectness out of [0,1]: {}", objectness)));
        }
        Ok(Proposal { embedding, bbox, objectness })
    }
}

/// Learned object queries: embeddings plus their positional encodings.
/// Rows must be pairwise distinct or the decoder could not tell the
/// queries apart.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawQuerySet")]
pub struct ObjectQuerySet {
    embeddings: Tensor,
    pos: Tensor,
}

#[derive(Deserialize)]
struct RawQuerySet {
    embeddings: Tensor,
    pos: Tensor,
}

impl TryFrom<RawQuerySet> for ObjectQuerySet {
    type Error = Error;

    fn try_from(raw: RawQuerySet) -> Result<Self> {
        ObjectQuerySet::new(raw.embeddings, raw.pos)
    }
}

impl ObjectQuerySet {
    pub fn new(embeddings: Tensor, pos: Tensor) -> Result<Self> {
        if embeddings.rank() != 2 || pos.shape() != embeddings.shape() {
            return Err(Error::shape(format!(
                "query embeddings {:?} and positional encodings {:?} must be equal 2-D shapes",
                embeddings.shape(),
                pos.shape()
            )));
        }
        if embeddings.shape()[0] == 0 {
            return Err(Error::arg("query set must be non-empty"));
        }
        let n = embeddings.shape()[0];
        for i in 0..n {
            for j in i + 1..n {
                if embeddings.row(i) == embeddings.row(j) {
                    return Err(Error::arg(format!(
                        "query rows {} and {} coincide; queries must be distinct",
                        i, j
                    )));
                }
            }
        }
        Ok(ObjectQuerySet { embeddings, pos })
    }

    pub fn seeded(n: usize, d: usize, std: f64, rng: &mut impl Rng) -> Result<Self> {
        let embeddings = crate::attention::random_matrix(n, d, std, rng);
        let pos = crate::attention::random_matrix(n, d, std, rng);
        ObjectQuerySet::new(embeddings, pos)
    }

    pub fn count(&self) -> usize {
        self.embeddings.shape()[0]
    }

    pub fn embeddings(&self) -> &Tensor {
        &self.embeddings
    }

    pub fn pos(&self) -> &Tensor {
        &self.pos
    }

    /// Reordered copy; used by the permutation-equivariance checks.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.count() {
            return Err(Error::arg("permutation length mismatch".to_string()));
        }
        let emb: Vec<Vec<f64>> = perm.iter().map(|&i| self.embeddings.row(i).to_vec()).collect();
        let pos: Vec<Vec<f64>> = perm.iter().map(|&i| self.pos.row(i).to_vec()).collect();
        ObjectQuerySet::new(Tensor::from_rows(&emb)?, Tensor::from_rows(&pos)?)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EncoderLayerParams {
    pub attn: AttentionParams,
    pub ffn: FfnParams,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecoderLayerParams {
    pub self_attn: AttentionParams,
    pub cross_attn: AttentionParams,
    pub ffn: FfnParams,
}

/// Full parameter set for the proposal network. The positional encoding
/// grid is part of the parameters: encode_frame input must carry exactly
/// grid_h·grid_w positions.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawEncDecParams")]
pub struct EncoderDecoderParams {
    pub d: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub input_proj: LinearParams,
    pub enc_layers: Vec<EncoderLayerParams>,
    pub dec_layers: Vec<DecoderLayerParams>,
    pub norm: NormKind,
    pub box_head: FfnParams,
    pub obj_head: LinearParams,
}

#[derive(Deserialize)]
struct RawEncDecParams {
    d: usize,
    grid_h: usize,
    grid_w: usize,
    input_proj: LinearParams,
    enc_layers: Vec<EncoderLayerParams>,
    dec_layers: Vec<DecoderLayerParams>,
    norm: NormKind,
    box_head: FfnParams,
    obj_head: LinearParams,
}

impl TryFrom<RawEncDecParams> for EncoderDecoderParams {
    type Error = Error;

    fn try_from(r: RawEncDecParams) -> Result<Self> {
        EncoderDecoderParams::new(
            r.d,
            r.grid_h,
            r.grid_w,
            r.input_proj,
            r.enc_layers,
            r.dec_layers,
            r.norm,
            r.box_head,
            r.obj_head,
        )
    }
}

impl EncoderDecoderParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        d: usize,
        grid_h: usize,
        grid_w: usize,
        input_proj: LinearParams,
        enc_layers: Vec<EncoderLayerParams>,
        dec_layers: Vec<DecoderLayerParams>,
        norm: NormKind,
        box_head: FfnParams,
        obj_head: LinearParams,
    ) -> Result<Self> {
        if enc_layers.is_empty() || dec_layers.is_empty() {
            return Err(Error::arg("encoder and decoder need at least one layer each"));
        }
        if grid_h == 0 || grid_w == 0 {
            return Err(Error::arg("positional grid must be non-empty"));
        }
        if input_proj.w.shape()[1] != d {
            return Err(Error::shape(format!(
                "input projection must map into width {}, got {:?}",
                d,
                input_proj.w.shape()
            )));
        }
        for l in &enc_layers {
            if l.attn.d_model != d || l.ffn.d_in() != d || l.ffn.d_out() != d {
                return Err(Error::shape("encoder layer width differs from d".to_string()));
            }
        }
        for l in &dec_layers {
            if l.self_attn.d_model != d
                || l.cross_attn.d_model != d
                || l.ffn.d_in() != d
                || l.ffn.d_out() != d
            {
                return Err(Error::shape("decoder layer width differs from d".to_string()));
            }
        }
        if box_head.d_in() != d || box_head.d_out() != 4 {
            return Err(Error::shape("box head must map d -> 4".to_string()));
        }
        if obj_head.w.shape() != [d, 1] {
            return Err(Error::shape("objectness head must map d -> 1".to_string()));
        }
        Ok(EncoderDecoderParams {
            d,
            grid_h,
            grid_w,
            input_proj,
            enc_layers,
            dec_layers,
            norm,
            box_head,
            obj_head,
        })
    }

    /// Seeded random initialization (normal, given std) at the desk-scale
    /// defaults: post-norm layers, FFN hidden width 2d.
    #[allow(clippy::too_many_arguments)]
    pub fn seeded(
        input_dim: usize,
        d: usize,
        n_heads: usize,
        n_enc: usize,
        n_dec: usize,
        grid_h: usize,
        grid_w: usize,
        std: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let hidden = 2 * d;
        let enc_layers = (0..n_enc)
            .map(|_| {
                Ok(EncoderLayerParams {
                    attn: AttentionParams::seeded(d, n_heads, std, rng)?,
                    ffn: FfnParams::seeded(d, hidden, d, std, rng),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let dec_layers = (0..n_dec)
            .map(|_| {
                Ok(DecoderLayerParams {
                    self_attn: AttentionParams::seeded(d, n_heads, std, rng)?,
                    cross_attn: AttentionParams::seeded(d, n_heads, std, rng)?,
                    ffn: FfnParams::seeded(d, hidden, d, std, rng),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        EncoderDecoderParams::new(
            d,
            grid_h,
            grid_w,
            LinearParams::seeded(input_dim, d, std, rng),
            enc_layers,
            dec_layers,
            NormKind::LayerNorm,
            FfnParams::seeded(d, hidden, 4, std, rng),
            LinearParams::seeded(d, 1, std, rng),
        )
    }
}

/// Fixed 2-D sinusoidal positional encoding: the first d/2 channels encode
/// the row index, the rest the column index, as sine/cosine pairs over a
/// geometric frequency ladder. Every row has norm √(d/2).
pub fn positional_encoding(h: usize, w: usize, d: usize) -> Result<Tensor> {
    if d == 0 || d % 4 != 0 {
        return Err(Error::arg(format!(
            "positional encoding width must be divisible by 4, got {}",
            d
        )));
    }
    if h == 0 || w == 0 {
        return Err(Error::arg("positional grid must be non-empty"));
    }
    let pairs = d / 4;
    let mut out = Tensor::zeros(vec![h * w, d]);
    for y in 0..h {
        for x in 0..w {
            let row = y * w + x;
            for i in 0..pairs {
                let omega = 1.0 / 10000f64.powf(4.0 * i as f64 / d as f64);
                out.set2(row, 2 * i, (y as f64 * omega).sin());
                out.set2(row, 2 * i + 1, (y as f64 * omega).cos());
                out.set2(row, d / 2 + 2 * i, (x as f64 * omega).sin());
                out.set2(row, d / 2 + 2 * i + 1, (x as f64 * omega).cos());
            }
        }
    }
    Ok(out)
}

/// Transformer encoder over the sequentialized feature map `f0` [D, HW]:
/// projects D→d, then runs post-norm MSA/FFN layers with the positional
/// encoding added to queries and keys (not values).
pub fn encode_frame(f0: &Tensor, params: &EncoderDecoderParams) -> Result<Tensor> {
    if f0.rank() != 2 {
        return Err(Error::shape(format!("f0 must be [D, HW], got {:?}", f0.shape())));
    }
    let hw = params.grid_h * params.grid_w;
    if f0.shape()[1] != hw {
        return Err(Error::shape(format!(
            "f0 has {} positions but the grid is {}x{}",
            f0.shape()[1],
            params.grid_h,
            params.grid_w
        )));
    }
    if f0.shape()[0] != params.input_proj.w.shape()[0] {
        return Err(Error::shape(format!(
            "f0 feature width {} does not match input projection {:?}",
            f0.shape()[0],
            params.input_proj.w.shape()
        )));
    }
    let pos = positional_encoding(params.grid_h, params.grid_w, params.d)?;
    let mut x = params.input_proj.apply(&f0.transpose()?)?;
    for layer in &params.enc_layers {
        let qk = x.add(&pos)?;
        let attn = attend(&qk, &qk, &x, &layer.attn)?;
        x = params.norm.apply(&x.add(&attn)?)?;
        let f = layer.ffn.apply(&x)?;
        x = params.norm.apply(&x.add(&f)?)?;
    }
    Ok(x)
}

/// Decoder stack shared by `propose` and the tests that inspect rows
/// before the output heads: query self-attention, cross-attention into
/// `f1` (keys carry the frame positional encoding), FFN, post-norm
/// residuals throughout.
pub fn decode_embeddings(
    f1: &Tensor,
    queries: &ObjectQuerySet,
    params: &EncoderDecoderParams,
) -> Result<Tensor> {
    if f1.rank() != 2 || f1.shape()[1] != params.d {
        return Err(Error::shape(format!(
            "f1 must be [HW, {}], got {:?}",
            params.d,
            f1.shape()
        )));
    }
    if queries.embeddings.shape()[1] != params.d {
        return Err(Error::shape(format!(
            "queries are width {}, params want {}",
            queries.embeddings.shape()[1],
            params.d
        )));
    }
    let f_pos = if f1.shape()[0] == params.grid_h * params.grid_w {
        positional_encoding(params.grid_h, params.grid_w, params.d)?
    } else {
        // Cross-attention also accepts pre-encoded maps of other sizes
        // (single row in the degenerate tests); keys then go bare.
        Tensor::zeros(f1.shape().to_vec())
    };
    let keys = f1.add(&f_pos)?;
    let mut x = queries.embeddings.clone();
    for layer in &params.dec_layers {
        let qk = x.add(&queries.pos)?;
        let self_out = attend(&qk, &qk, &x, &layer.self_attn)?;
        x = params.norm.apply(&x.add(&self_out)?)?;
        let q = x.add(&queries.pos)?;
        let cross = attend(&q, &keys, f1, &layer.cross_attn)?;
        x = params.norm.apply(&x.add(&cross)?)?;
        let f = layer.ffn.apply(&x)?;
        x = params.norm.apply(&x.add(&f)?)?;
    }
    Ok(x)
}

/// Full proposal pass: decode embeddings, then sigmoid box and objectness
/// heads. Returns exactly one proposal per query, in query order.
pub fn propose(
    f1: &Tensor,
    queries: &ObjectQuerySet,
    params: &EncoderDecoderParams,
) -> Result<Vec<Proposal>> {
    let rows = decode_embeddings(f1, queries, params)?;
    let box_logits = params.box_head.apply(&rows)?;
    let obj_logits = params.obj_head.apply(&rows)?;
    let mut out = Vec::with_capacity(queries.count());
    for i in 0..queries.count() {
        let b = box_logits.row(i);
        let bbox = BoxCwh::new(
            sigmoid(b[0]),
            sigmoid(b[1]),
            sigmoid(b[2]),
            sigmoid(b[3]),
        );
        let embedding = Tensor::new(vec![params.d], rows.row(i).to_vec())?;
        out.push(Proposal::new(embedding, bbox, sigmoid(obj_logits.get2(i, 0)))?);
    }
    Ok(out)
}
