//! Memory encoder: per-track aggregation of buffered state histories into
//! a single tracklet embedding. The default design runs a short-window
//! block queried by the most recent state, a long-window block queried by
//! the track's aggregation token, and a fusion block that emits the
//! tracklet embedding together with the updated token. Pooling and
//! single-block variants exist behind a strategy switch for ablations.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{attend, AttentionParams, FfnParams};
use crate::error::{Error, Result};
use crate::memory::{MemoryBuffer, TrackState};
use crate::tensor::Tensor;
use crate::tracker::TrackId;

/// Per-track dynamic aggregation token. Newborn tracks start from the
/// shared initial token and diverge as the fusion block updates them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dmat {
    pub token: Tensor,
}

impl Dmat {
    /// The token a track carries at birth: exactly the shared initial one.
    pub fn birth(blocks: &EncoderBlocks) -> Self {
        Dmat { token: blocks.initial_token.clone() }
    }
}

/// How a track's buffered history is reduced to one embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationStrategy {
    /// Short block + long block + fusion (the default three-block design).
    Ours,
    /// One attention block over the long window, queried by the most
    /// recent state.
    Single,
    /// Short block first, its output then queries the long window.
    LongAfterShort,
    /// Arithmetic mean of the long-window embeddings.
    AvgPool,
    /// The long-window embedding with the largest L2 norm (ties favor the
    /// most recent state).
    MaxPool,
}

impl Default for AggregationStrategy {
    fn default() -> Self {
        AggregationStrategy::Ours
    }
}

/// Weights and windows of the memory encoder.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawEncoderBlocks")]
pub struct EncoderBlocks {
    pub d: usize,
    pub b_s: AttentionParams,
    pub b_l: AttentionParams,
    pub b_f: AttentionParams,
    pub fuse_ffn: FfnParams,
    pub initial_token: Tensor,
    pub t_short: usize,
    pub t_long: usize,
    /// Multiplier on the temporal encodings added to attention keys.
    pub pos_scale: f64,
}

#[derive(Deserialize)]
struct RawEncoderBlocks {
    d: usize,
    b_s: AttentionParams,
    b_l: AttentionParams,
    b_f: AttentionParams,
    fuse_ffn: FfnParams,
    initial_token: Tensor,
    t_short: usize,
    t_long: usize,
    pos_scale: f64,
}

impl TryFrom<RawEncoderBlocks> for EncoderBlocks {
    type Error = Error;

    fn try_from(r: RawEncoderBlocks) -> Result<Self> {
        EncoderBlocks::new(
            r.d,
            r.b_s,
            r.b_l,
            r.b_f,
            r.fuse_ffn,
            r.initial_token,
            r.t_short,
            r.t_long,
            r.pos_scale,
        )
    }
}

impl EncoderBlocks {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        d: usize,
        b_s: AttentionParams,
        b_l: AttentionParams,
        b_f: AttentionParams,
        fuse_ffn: FfnParams,
        initial_token: Tensor,
        t_short: usize,
        t_long: usize,
        pos_scale: f64,
    ) -> Result<Self> {
        if d == 0 || d % 2 != 0 {
            return Err(Error::arg(format!(
                "temporal encodings need an even width, got d = {}",
                d
            )));
        }
        for (name, p) in [("b_s", &b_s), ("b_l", &b_l), ("b_f", &b_f)] {
            if p.d_model != d {
                return Err(Error::shape(format!("{} width {} differs from d {}", name, p.d_model, d)));
            }
        }
        if fuse_ffn.d_in() != d || fuse_ffn.d_out() != 2 * d {
            return Err(Error::shape(format!(
                "fusion ffn must map {} -> {}, got {} -> {}",
                d,
                2 * d,
                fuse_ffn.d_in(),
                fuse_ffn.d_out()
            )));
        }
        if initial_token.shape() != [d] {
            return Err(Error::shape(format!(
                "initial token must be [{}], got {:?}",
                d,
                initial_token.shape()
            )));
        }
        if t_short == 0 || t_short > t_long {
            return Err(Error::arg(format!(
                "window lengths must satisfy 1 <= t_short <= t_long, got {}/{}",
                t_short, t_long
            )));
        }
        if !pos_scale.is_finite() {
            return Err(Error::arg("pos_scale must be finite"));
        }
        Ok(EncoderBlocks { d, b_s, b_l, b_f, fuse_ffn, initial_token, t_short, t_long, pos_scale })
    }

    pub fn seeded(
        d: usize,
        n_heads: usize,
        t_short: usize,
        t_long: usize,
        std: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        EncoderBlocks::new(
            d,
            AttentionParams::seeded(d, n_heads, std, rng)?,
            AttentionParams::seeded(d, n_heads, std, rng)?,
            AttentionParams::seeded(d, n_heads, std, rng)?,
            FfnParams::seeded(d, 2 * d, 2 * d, std, rng),
            crate::attention::random_matrix(1, d, std, rng).reshape(vec![d])?,
            t_short,
            t_long,
            1.0,
        )
    }
}

/// Sinusoidal encodings of relative age within a window: row j (oldest
/// first) encodes age len-1-j, so the most recent state always carries
/// age 0 regardless of window length.
pub fn temporal_encoding(len: usize, d: usize) -> Result<Tensor> {
    if len == 0 {
        return Err(Error::arg("temporal encoding needs a non-empty window"));
    }
    if d == 0 || d % 2 != 0 {
        return Err(Error::arg(format!("temporal encoding width must be even, got {}", d)));
    }
    let mut out = Tensor::zeros(vec![len, d]);
    for j in 0..len {
        let age = (len - 1 - j) as f64;
        for i in 0..d / 2 {
            let omega = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
            out.set2(j, 2 * i, (age * omega).sin());
            out.set2(j, 2 * i + 1, (age * omega).cos());
        }
    }
    Ok(out)
}

fn stack_embeddings(states: &[TrackState], d: usize) -> Result<Tensor> {
    if states.is_empty() {
        return Err(Error::arg("memory encoder got an empty state window"));
    }
    let mut rows = Vec::with_capacity(states.len());
    for s in states {
        if s.embedding.shape() != [d] {
            return Err(Error::shape(format!(
                "state embedding {:?} does not match width {}",
                s.embedding.shape(),
                d
            )));
        }
        rows.push(s.embedding.data().to_vec());
    }
    Tensor::from_rows(&rows)
}

fn keyed_window(states: &[TrackState], blocks: &EncoderBlocks) -> Result<(Tensor, Tensor)> {
    let values = stack_embeddings(states, blocks.d)?;
    let keys = values.add(&temporal_encoding(states.len(), blocks.d)?.scale(blocks.pos_scale))?;
    Ok((keys, values))
}

fn one_query_attention(
    query: &Tensor,
    states: &[TrackState],
    params: &AttentionParams,
    blocks: &EncoderBlocks,
) -> Result<Tensor> {
    if query.shape() != [blocks.d] {
        return Err(Error::shape(format!(
            "query must be [{}], got {:?}",
            blocks.d,
            query.shape()
        )));
    }
    let (keys, values) = keyed_window(states, blocks)?;
    let q = Tensor::new(vec![1, blocks.d], query.data().to_vec())?;
    let out = attend(&q, &keys, &values, params)?;
    Tensor::new(vec![blocks.d], out.row(0).to_vec())
}

/// Aggregated short-term context: the window's most recent state queries
/// all window states. Temporal encodings are added to the keys only, so
/// the output stays a convex mix of the raw state embeddings under
/// identity projections.
pub fn encode_short(states: &[TrackState], blocks: &EncoderBlocks) -> Result<Tensor> {
    if states.is_empty() {
        return Err(Error::arg("memory encoder got an empty state window"));
    }
    let recent = states[states.len() - 1].embedding.clone();
    one_query_attention(&recent, states, &blocks.b_s, blocks)
}

/// Aggregated long-term context: the track's aggregation token queries the
/// long window.
pub fn encode_long(dmat: &Dmat, states: &[TrackState], blocks: &EncoderBlocks) -> Result<Tensor> {
    one_query_attention(&dmat.token, states, &blocks.b_l, blocks)
}

/// Fusion block: the aggregation token attends over the two contexts, and
/// a feed-forward head pair emits the tracklet embedding and the updated
/// token.
pub fn fuse(asc: &Tensor, alc: &Tensor, dmat: &Dmat, blocks: &EncoderBlocks) -> Result<(Tensor, Dmat)> {
    for (name, t) in [("asc", asc), ("alc", alc), ("dmat token", &dmat.token)] {
        if t.shape() != [blocks.d] {
            return Err(Error::shape(format!(
                "{} must be [{}], got {:?}",
                name,
                blocks.d,
                t.shape()
            )));
        }
    }
    let kv = Tensor::from_rows(&[asc.data().to_vec(), alc.data().to_vec()])?;
    let q = Tensor::new(vec![1, blocks.d], dmat.token.data().to_vec())?;
    let attended = attend(&q, &kv, &kv, &blocks.b_f)?;
    let heads = blocks.fuse_ffn.apply(&attended)?;
    let row = heads.row(0);
    let tracklet = Tensor::new(vec![blocks.d], row[..blocks.d].to_vec())?;
    let token = Tensor::new(vec![blocks.d], row[blocks.d..].to_vec())?;
    Ok((tracklet, Dmat { token }))
}

fn window_mean(states: &[TrackState], d: usize) -> Result<Tensor> {
    let e = stack_embeddings(states, d)?;
    let n = states.len() as f64;
    let mut out = vec![0.0; d];
    for i in 0..states.len() {
        for (c, v) in e.row(i).iter().enumerate() {
            out[c] += v / n;
        }
    }
    Tensor::new(vec![d], out)
}

fn window_max_norm(states: &[TrackState], d: usize) -> Result<Tensor> {
    let e = stack_embeddings(states, d)?;
    let mut best = 0usize;
    let mut best_norm = f64::NEG_INFINITY;
    for i in 0..states.len() {
        let norm: f64 = e.row(i).iter().map(|v| v * v).sum();
        if norm >= best_norm {
            best = i;
            best_norm = norm;
        }
    }
    Tensor::new(vec![d], e.row(best).to_vec())
}

fn encode_track(
    buffer: &MemoryBuffer,
    id: TrackId,
    dmat: &Dmat,
    blocks: &EncoderBlocks,
    strategy: AggregationStrategy,
) -> Result<(Tensor, Dmat)> {
    let long = buffer.window(id, blocks.t_long)?;
    match strategy {
        AggregationStrategy::Ours => {
            let short = buffer.window(id, blocks.t_short)?;
            let asc = encode_short(&short, blocks)?;
            let alc = encode_long(dmat, &long, blocks)?;
            fuse(&asc, &alc, dmat, blocks)
        }
        AggregationStrategy::Single => {
            let recent = long[long.len() - 1].embedding.clone();
            let out = one_query_attention(&recent, &long, &blocks.b_s, blocks)?;
            Ok((out, dmat.clone()))
        }
        AggregationStrategy::LongAfterShort => {
            let short = buffer.window(id, blocks.t_short)?;
            let asc = encode_short(&short, blocks)?;
            let out = one_query_attention(&asc, &long, &blocks.b_l, blocks)?;
            Ok((out, dmat.clone()))
        }
        AggregationStrategy::AvgPool => Ok((window_mean(&long, blocks.d)?, dmat.clone())),
        AggregationStrategy::MaxPool => Ok((window_max_norm(&long, blocks.d)?, dmat.clone())),
    }
}

/// Encode every live track independently. Row order equals the buffer's
/// admission order; the returned token map holds exactly the live tracks.
pub fn encode_all(
    buffer: &MemoryBuffer,
    dmats: &BTreeMap<TrackId, Dmat>,
    blocks: &EncoderBlocks,
    strategy: AggregationStrategy,
) -> Result<(Tensor, BTreeMap<TrackId, Dmat>)> {
    let ids = buffer.track_ids();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(ids.len());
    let mut updated = BTreeMap::new();
    for &id in &ids {
        let dmat = dmats
            .get(&id)
            .ok_or_else(|| Error::invariant(format!("live track {} has no aggregation token", id)))?;
        let (embedding, next) = encode_track(buffer, id, dmat, blocks, strategy)?;
        rows.push(embedding.data().to_vec());
        updated.insert(id, next);
    }
    let out = if rows.is_empty() {
        Tensor::new(vec![0, blocks.d], vec![])?
    } else {
        Tensor::from_rows(&rows)?
    };
    Ok((out, updated))
}
