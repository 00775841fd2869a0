//! Hand-constructed pipeline weights that bind queries to frame content by
//! identity-embedding dot products instead of trained parameters.
//!
//! The model width splits into an identity subspace (the first `d - 8`
//! channels) and 8 reserved channels: four carrying scaled box logits, one
//! carrying a visibility marker, three spare. Frame features place one row
//! per visible object on a coarse grid; a query holding that object's
//! identity embedding attends to its row with near-total mass, so the
//! readout heads recover the box and visibility, while a query whose
//! object is absent attends uniformly over zeros and scores as a miss.
//! The memory-encoder blocks project their outputs back onto the identity
//! subspace so stored box and visibility residue never contaminates the
//! next frame's queries; the decoder passes the reserved channels through
//! unchanged so the heads can read them, and amplifies the attended
//! identity content so normalized storage keeps it dominant.
//!
//! Duplicate suppression works through the decoder's self-attention: the
//! fusion stage stamps a marker channel on every tracklet query, a
//! candidate's self-attention mass concentrates on queries holding its own
//! identity, and the uniqueness head turns accumulated marker mass into a
//! low score. A candidate whose object is already tracked dies there;
//! queries holding fresh identities keep uniqueness near one.

use crate::attention::{eye, AttentionParams, FfnParams, LinearParams, NormKind};
use crate::boxes::BoxCwh;
use crate::error::{Error, Result};
use crate::memory::TrackState;
use crate::proposal::{DecoderLayerParams, Proposal};
use crate::tensor::Tensor;
use crate::tracker::{DecoderParams, PipelineParams};

/// Channels reserved behind the identity subspace: 4 box + 1 visibility +
/// 3 spare.
pub const RESERVED_CHANNELS: usize = 8;
/// Feature rows live on a GRID_SIDE x GRID_SIDE layout of the unit square.
pub const GRID_SIDE: usize = 16;
/// Box logits are stored divided by this and the box head multiplies it
/// back, keeping feature-row norms close to one.
pub const BOX_LOGIT_GAIN: f64 = 16.0;
/// Value written to the visibility channel of every placed row.
pub const VISIBILITY_GAIN: f64 = 0.3;
/// Objectness head: gain on the visibility channel and bias. A full
/// attention hit yields sigmoid(25 * 0.3 - 4) ~ 0.97, an absent object
/// sigmoid(-4) ~ 0.018.
pub const OBJECTNESS_GAIN: f64 = 25.0;
pub const OBJECTNESS_BIAS: f64 = -4.0;
/// Uniqueness head bias: a candidate sharing its identity with no live
/// tracklet scores sigmoid(4) ~ 0.98.
pub const UNIQUENESS_BIAS: f64 = 4.0;
/// Written by the fusion stage into channel d_emb + 5 of every tracklet
/// query, invisible to binding (frame rows are zero there).
pub const TRACKLET_MARK: f64 = 1.0;
/// Uniqueness head weight on the duplicate-mass channel d_emb + 6.
/// Uniqueness drops below one half once a query's self-attention puts more
/// than bias / (gain * mark) = 0.1 of its mass on marked tracklet rows; a
/// duplicate splitting evenly with its twin scores sigmoid(4 - 20) ~ 1e-7.
pub const UNIQUENESS_GAIN: f64 = 40.0;
/// The decoder's cross-attention output projection multiplies the identity
/// channels by this. Refreshed embeddings are stored L2-normalized, so
/// without the boost the reserved-channel bookkeeping (marker, duplicate
/// mass, visibility) would shave the identity norm a little every frame
/// until binding and duplicate-suppression margins collapse; with it the
/// identity content dominates the norm and the residue washes out.
pub const REFRESH_GAIN: f64 = 16.0;
/// Attention logit per unit of query-key dot product. Against a grid of
/// 255 zero rows, a unit hit keeps mass e^25 / (e^25 + 255) within 1e-8 of
/// one, and a competitor row at cosine similarity 0.8 is outscored by
/// e^(25 * 0.2) ~ 150 to one, enough to keep decoded boxes crisp when the
/// embeddings carry box positions rather than mutually orthogonal
/// identities.
pub const BINDING_SHARPNESS: f64 = 25.0;

const LOGIT_CLAMP: f64 = 1e-4;

pub fn grid_cells() -> usize {
    GRID_SIDE * GRID_SIDE
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP);
    (p / (1.0 - p)).ln()
}

/// Diagonal projection keeping the identity subspace, zeroing the
/// reserved channels.
fn identity_projection(d_model: usize) -> Tensor {
    let mut p = Tensor::zeros(vec![d_model, d_model]);
    for i in 0..d_model - RESERVED_CHANNELS {
        p.data_mut()[i * d_model + i] = 1.0;
    }
    p
}

/// Diagonal projection amplifying the identity subspace by REFRESH_GAIN
/// and passing the reserved channels through.
fn refresh_projection(d_model: usize) -> Tensor {
    let mut p = eye(d_model);
    for i in 0..d_model - RESERVED_CHANNELS {
        p.data_mut()[i * d_model + i] = REFRESH_GAIN;
    }
    p
}

/// Single-head attention whose logits are BINDING_SHARPNESS times the raw
/// query-key dot product (attend divides by sqrt(d), so the query
/// projection multiplies it back in).
fn binding_attention(d_model: usize, w_o: Tensor) -> Result<AttentionParams> {
    let w_q = eye(d_model).scale(BINDING_SHARPNESS * (d_model as f64).sqrt());
    AttentionParams::new(d_model, 1, w_q, eye(d_model), eye(d_model), w_o)
}

/// Zero-extend an identity embedding onto the full model width.
pub fn extend_embedding(e: &Tensor, d_model: usize) -> Result<Tensor> {
    if e.rank() != 1 || e.len() != d_model - RESERVED_CHANNELS {
        return Err(Error::shape(format!(
            "identity embedding must be [{}], got {:?}",
            d_model - RESERVED_CHANNELS,
            e.shape()
        )));
    }
    let mut data = e.data().to_vec();
    data.resize(d_model, 0.0);
    Tensor::new(vec![d_model], data)
}

/// Zero-extend every proposal embedding onto the model width.
pub fn extend_proposals(proposals: &[Proposal], d_model: usize) -> Result<Vec<Proposal>> {
    proposals
        .iter()
        .map(|p| {
            Proposal::new(extend_embedding(&p.embedding, d_model)?, p.bbox, p.objectness)
        })
        .collect()
}

/// Memory-encoder blocks in the identity configuration: sharp binding
/// attention with outputs projected onto the identity subspace, pass-through
/// fusion that stamps the tracklet marker, zero initial token, no temporal
/// term.
pub fn identity_blocks(d_emb: usize, t_short: usize, t_long: usize) -> Result<crate::aggregate::EncoderBlocks> {
    let d = d_emb + RESERVED_CHANNELS;
    let mut fuse_ffn = FfnParams::identity_passthrough(d, 2);
    fuse_ffn.b2.data_mut()[d_emb + 5] = TRACKLET_MARK;
    crate::aggregate::EncoderBlocks::new(
        d,
        binding_attention(d, identity_projection(d))?,
        binding_attention(d, identity_projection(d))?,
        binding_attention(d, identity_projection(d))?,
        fuse_ffn,
        Tensor::zeros(vec![d]),
        t_short,
        t_long,
        0.0,
    )
}

/// One-layer decoder in the identity configuration. Self-attention binds
/// sharply among the queries and copies the tracklet-marker channel into
/// the duplicate-mass channel, so a candidate whose identity is already
/// held by a tracklet accumulates mass there and the uniqueness head
/// suppresses it; everything else passes through untouched.
/// Cross-attention binds sharply to the frame rows and the box and
/// objectness heads read the reserved channels.
pub fn identity_decoder(d_emb: usize) -> Result<DecoderParams> {
    let d = d_emb + RESERVED_CHANNELS;
    let mut marker_select = Tensor::zeros(vec![d, d]);
    marker_select.set2(d_emb + 5, d_emb + 6, 1.0);
    let self_attn = AttentionParams::new(
        d,
        1,
        eye(d).scale(BINDING_SHARPNESS * (d as f64).sqrt()),
        eye(d),
        marker_select,
        eye(d),
    )?;
    let cross_attn = binding_attention(d, refresh_projection(d))?;
    let layer = DecoderLayerParams { self_attn, cross_attn, ffn: FfnParams::zeros(d, 1, d) };

    let mut box_w = Tensor::zeros(vec![d, 4]);
    for r in 0..4 {
        box_w.set2(d_emb + r, r, BOX_LOGIT_GAIN);
    }
    let mut obj_w = Tensor::zeros(vec![d, 1]);
    obj_w.set2(d_emb + 4, 0, OBJECTNESS_GAIN);
    let mut uni_w = Tensor::zeros(vec![d, 1]);
    uni_w.set2(d_emb + 6, 0, -UNIQUENESS_GAIN);
    DecoderParams::new(
        d,
        vec![layer],
        NormKind::Identity,
        LinearParams::new(box_w, Tensor::zeros(vec![4]))?,
        LinearParams::new(obj_w, Tensor::new(vec![1], vec![OBJECTNESS_BIAS])?)?,
        LinearParams::new(uni_w, Tensor::new(vec![1], vec![UNIQUENESS_BIAS])?)?,
    )
}

/// Full pipeline parameters for the identity configuration (proposal
/// route only: no candidate network).
pub fn identity_pipeline(
    d_emb: usize,
    t_short: usize,
    t_long: usize,
) -> Result<PipelineParams> {
    PipelineParams::new(
        None,
        identity_blocks(d_emb, t_short, t_long)?,
        identity_decoder(d_emb)?,
        crate::aggregate::AggregationStrategy::Ours,
    )
}

/// Compose one feature row: identity embedding, scaled box logits,
/// visibility marker.
fn feature_row(e: &Tensor, bbox: &BoxCwh, d_model: usize) -> Result<Vec<f64>> {
    let d_emb = d_model - RESERVED_CHANNELS;
    let mut row = extend_embedding(e, d_model)?.data().to_vec();
    for (k, v) in [bbox.cx, bbox.cy, bbox.w, bbox.h].into_iter().enumerate() {
        row[d_emb + k] = logit(v) / BOX_LOGIT_GAIN;
    }
    row[d_emb + 4] = VISIBILITY_GAIN;
    Ok(row)
}

/// Stand-in for the image pathway: each visible object writes one feature
/// row at the grid cell under its box center (occupied cells spill to the
/// nearest free cell); every other cell is zero. Absent objects leave no
/// trace, which is exactly what makes their queries decode as misses.
pub fn encode_oracle_frame(visible: &[(BoxCwh, Tensor)]) -> Result<Tensor> {
    if visible.is_empty() {
        return Err(Error::arg(
            "oracle frame needs the embedding width; use encode_empty_oracle_frame",
        ));
    }
    let d_emb = visible[0].1.len();
    let d_model = d_emb + RESERVED_CHANNELS;
    if visible.len() > grid_cells() {
        return Err(Error::arg(format!(
            "{} objects exceed the {} grid cells",
            visible.len(),
            grid_cells()
        )));
    }
    let mut f1 = Tensor::zeros(vec![grid_cells(), d_model]);
    let mut occupied = vec![false; grid_cells()];
    for (bbox, e) in visible {
        let col = ((bbox.cx * GRID_SIDE as f64) as usize).min(GRID_SIDE - 1);
        let row_i = ((bbox.cy * GRID_SIDE as f64) as usize).min(GRID_SIDE - 1);
        let cell = nearest_free_cell(row_i, col, &occupied);
        occupied[cell] = true;
        let row = feature_row(e, bbox, d_model)?;
        for (j, v) in row.into_iter().enumerate() {
            f1.set2(cell, j, v);
        }
    }
    Ok(f1)
}

/// All-zero frame features for a frame with nothing visible.
pub fn encode_empty_oracle_frame(d_emb: usize) -> Tensor {
    Tensor::zeros(vec![grid_cells(), d_emb + RESERVED_CHANNELS])
}

/// Closest unoccupied cell by squared grid distance, ties broken by flat
/// index. At least one cell is free because placement is capped at the
/// cell count.
fn nearest_free_cell(row: usize, col: usize, occupied: &[bool]) -> usize {
    let mut best: Option<(usize, usize)> = None;
    for r in 0..GRID_SIDE {
        for c in 0..GRID_SIDE {
            let flat = r * GRID_SIDE + c;
            if occupied[flat] {
                continue;
            }
            let dr = r as isize - row as isize;
            let dc = c as isize - col as isize;
            let dist = (dr * dr + dc * dc) as usize;
            if best.map(|(bd, _)| dist < bd).unwrap_or(true) {
                best = Some((dist, flat));
            }
        }
    }
    best.expect("placement is capped at the cell count").1
}

/// Deterministic appearance stand-in for detections that arrive without
/// embeddings (result files): sinusoidal features of the box geometry,
/// L2-normalized. Nearby boxes in consecutive frames map to nearby
/// embeddings, so binding attention falls back to spatial continuity.
pub fn box_embedding(bbox: &BoxCwh, d_emb: usize) -> Result<Tensor> {
    if d_emb == 0 || d_emb % 8 != 0 {
        return Err(Error::arg(format!(
            "box embeddings need a width divisible by 8, got {}",
            d_emb
        )));
    }
    let pairs = d_emb / 8;
    let mut data = Vec::with_capacity(d_emb);
    for coord in [bbox.cx, bbox.cy, bbox.w, bbox.h] {
        for j in 0..pairs {
            let omega = (2.0f64).powi(j as i32);
            data.push((omega * coord).sin());
            data.push((omega * coord).cos());
        }
    }
    Ok(crate::tracker::l2_normalized(&Tensor::new(vec![d_emb], data)?))
}

/// Present state carrying a zero-extended identity embedding; test and
/// harness shorthand.
pub fn seeded_state(frame: usize, e: &Tensor, bbox: BoxCwh, d_model: usize) -> Result<TrackState> {
    TrackState::present(frame, extend_embedding(e, d_model)?, bbox, 0.9)
}
