//! Query entries, the memory decoder, and supervision assignment. The
//! per-frame tracking loop itself (`step`) lives here too once memory and
//! aggregation are wired in; this file owns everything that scores and
//! labels the concatenated candidate/tracklet query set.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::{encode_all, AggregationStrategy, Dmat, EncoderBlocks};
use crate::assign::{hungarian, Assignment};
use crate::attention::{attend, LinearParams, NormKind};
use crate::boxes::{giou, BoxCwh};
use crate::error::{Error, Result};
use crate::memory::{MemoryBuffer, TrackState};
use crate::proposal::{DecoderLayerParams, EncoderDecoderParams, ObjectQuerySet, Proposal};
use crate::tensor::{sigmoid, Tensor};

pub type TrackId = i64;

/// Weights of the bipartite matching cost used when assigning candidate
/// entries to ground-truth boxes: objectness term, L1 box term, GIoU term.
pub const MATCH_WEIGHTS: (f64, f64, f64) = (3.0, 6.0, 3.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Candidate,
    Tracklet,
}

/// One decoded query: a candidate proposal or a live tracklet, with its
/// refreshed embedding, box and scores. Confidence is always the product
/// of objectness and uniqueness; tracklet entries carry uniqueness 1.
#[derive(Clone, Debug, Serialize)]
pub struct QueryEntry {
    pub kind: QueryKind,
    pub source_id: Option<TrackId>,
    pub embedding: Tensor,
    pub bbox: BoxCwh,
    pub objectness: f64,
    pub uniqueness: f64,
    pub confidence: f64,
}

impl QueryEntry {
    pub fn candidate(embedding: Tensor, bbox: BoxCwh, objectness: f64, uniqueness: f64) -> Result<Self> {
        let confidence = confidence(objectness, uniqueness)?;
        QueryEntry::validated(QueryEntry {
            kind: QueryKind::Candidate,
            source_id: None,
            embedding,
            bbox,
            objectness,
            uniqueness,
            confidence,
        })
    }

    pub fn tracklet(id: TrackId, embedding: Tensor, bbox: BoxCwh, objectness: f64) -> Result<Self> {
        let confidence = confidence(objectness, 1.0)?;
        QueryEntry::validated(QueryEntry {
            kind: QueryKind::Tracklet,
            source_id: Some(id),
            embedding,
            bbox,
            objectness,
            uniqueness: 1.0,
            confidence,
        })
    }

    fn validated(e: QueryEntry) -> Result<Self> {
        if e.embedding.rank() != 1 {
            return Err(Error::shape("query embedding must be 1-D".to_string()));
        }
        let inside = [e.bbox.cx, e.bbox.cy, e.bbox.w, e.bbox.h]
            .iter()
            .all(|v| (0.0..=1.0).contains(v));
        if !inside {
            return Err(Error::arg(format!("query box out of [0,1]: {:?}", e.bbox)));
        }
        Ok(e)
    }
}

/// Supervision for one query entry: target objectness, target uniqueness
/// (candidates matched to ground truth only), target box (matched
/// candidates and visible tracklets only).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupervisionTarget {
    pub objectness: f64,
    pub uniqueness: Option<f64>,
    pub bbox: Option<BoxCwh>,
}

impl SupervisionTarget {
    fn background() -> Self {
        SupervisionTarget { objectness: 0.0, uniqueness: None, bbox: None }
    }
}

/// One ground-truth instance in a frame, box in normalized coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtInstance {
    pub id: TrackId,
    pub bbox: BoxCwh,
}

/// One emitted tracker output row for a frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub id: TrackId,
    pub bbox: BoxCwh,
    pub confidence: f64,
}

/// Thresholds and capacities for the per-frame loop.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawTrackerConfig", deny_unknown_fields)]
pub struct TrackerConfig {
    pub eps_conf: f64,
    pub k_miss: usize,
    pub t_short: usize,
    pub t_long: usize,
    pub t_max: usize,
    pub n_max: usize,
    pub tau_dup: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrackerConfig {
    eps_conf: f64,
    k_miss: usize,
    t_short: usize,
    t_long: usize,
    t_max: usize,
    n_max: usize,
    tau_dup: f64,
}

impl TryFrom<RawTrackerConfig> for TrackerConfig {
    type Error = Error;

    fn try_from(r: RawTrackerConfig) -> Result<Self> {
        TrackerConfig::new(r.eps_conf, r.k_miss, r.t_short, r.t_long, r.t_max, r.n_max, r.tau_dup)
    }
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            eps_conf: 0.5,
            k_miss: 30,
            t_short: 5,
            t_long: 25,
            t_max: 30,
            n_max: 350,
            tau_dup: 0.7,
        }
    }
}

impl TrackerConfig {
    pub fn new(
        eps_conf: f64,
        k_miss: usize,
        t_short: usize,
        t_long: usize,
        t_max: usize,
        n_max: usize,
        tau_dup: f64,
    ) -> Result<Self> {
        if !(eps_conf > 0.0 && eps_conf < 1.0) {
            return Err(Error::arg(format!("eps_conf must lie in (0,1), got {}", eps_conf)));
        }
        if k_miss == 0 || k_miss > t_max {
            return Err(Error::arg(format!(
                "k_miss must lie in [1, t_max={}], got {}",
                t_max, k_miss
            )));
        }
        if t_short == 0 || t_short > t_long || t_long > t_max {
            return Err(Error::arg(format!(
                "window sizes must satisfy 1 <= t_short <= t_long <= t_max, got {}/{}/{}",
                t_short, t_long, t_max
            )));
        }
        if n_max == 0 {
            return Err(Error::arg("n_max must be positive"));
        }
        if !(0.0..=1.0).contains(&tau_dup) {
            return Err(Error::arg(format!("tau_dup must lie in [0,1], got {}", tau_dup)));
        }
        Ok(TrackerConfig { eps_conf, k_miss, t_short, t_long, t_max, n_max, tau_dup })
    }
}

/// Confidence score of a query entry.
pub fn confidence(objectness: f64, uniqueness: f64) -> Result<f64> {
    for (name, v) in [("objectness", objectness), ("uniqueness", uniqueness)] {
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(Error::arg(format!("{} {} outside [0,1]", name, v)));
        }
    }
    Ok(objectness * uniqueness)
}

/// Memory decoder parameters: stacked self/cross attention layers over the
/// concatenated query set, then sigmoid box/objectness/uniqueness heads.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawDecoderParams")]
pub struct DecoderParams {
    pub d: usize,
    pub layers: Vec<DecoderLayerParams>,
    pub norm: NormKind,
    pub box_head: LinearParams,
    pub obj_head: LinearParams,
    pub uni_head: LinearParams,
}

#[derive(Deserialize)]
struct RawDecoderParams {
    d: usize,
    layers: Vec<DecoderLayerParams>,
    norm: NormKind,
    box_head: LinearParams,
    obj_head: LinearParams,
    uni_head: LinearParams,
}

impl TryFrom<RawDecoderParams> for DecoderParams {
    type Error = Error;

    fn try_from(r: RawDecoderParams) -> Result<Self> {
        DecoderParams::new(r.d, r.layers, r.norm, r.box_head, r.obj_head, r.uni_head)
    }
}

impl DecoderParams {
    pub fn new(
        d: usize,
        layers: Vec<DecoderLayerParams>,
        norm: NormKind,
        box_head: LinearParams,
        obj_head: LinearParams,
        uni_head: LinearParams,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::arg("decoder needs at least one layer"));
        }
        for l in &layers {
            if l.self_attn.d_model != d
                || l.cross_attn.d_model != d
                || l.ffn.d_in() != d
                || l.ffn.d_out() != d
            {
                return Err(Error::shape("decoder layer width differs from d".to_string()));
            }
        }
        if box_head.w.shape() != [d, 4] {
            return Err(Error::shape("box head must map d -> 4".to_string()));
        }
        for (name, h) in [("objectness", &obj_head), ("uniqueness", &uni_head)] {
            if h.w.shape() != [d, 1] {
                return Err(Error::shape(format!("{} head must map d -> 1", name)));
            }
        }
        Ok(DecoderParams { d, layers, norm, box_head, obj_head, uni_head })
    }

    pub fn seeded(d: usize, n_heads: usize, n_layers: usize, std: f64, rng: &mut impl Rng) -> Result<Self> {
        use crate::attention::{AttentionParams, FfnParams};
        let layers = (0..n_layers)
            .map(|_| {
                Ok(DecoderLayerParams {
                    self_attn: AttentionParams::seeded(d, n_heads, std, rng)?,
                    cross_attn: AttentionParams::seeded(d, n_heads, std, rng)?,
                    ffn: FfnParams::seeded(d, 2 * d, d, std, rng),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        DecoderParams::new(
            d,
            layers,
            NormKind::LayerNorm,
            LinearParams::seeded(d, 4, std, rng),
            LinearParams::seeded(d, 1, std, rng),
            LinearParams::seeded(d, 1, std, rng),
        )
    }
}

/// Decode the concatenated query set (candidates first, then tracklets)
/// against the encoded frame `f1` [HW, d]. Self-attention lets entries
/// reason about each other, cross-attention reads the frame content (keys
/// are the content rows themselves; queries here are objects, not grid
/// positions). Output order equals input order.
pub fn decode(
    f1: &Tensor,
    candidates: &[Proposal],
    tracklet_states: &Tensor,
    tracklet_ids: &[TrackId],
    params: &DecoderParams,
) -> Result<Vec<QueryEntry>> {
    if f1.rank() != 2 || f1.shape()[1] != params.d {
        return Err(Error::shape(format!("f1 must be [HW, {}], got {:?}", params.d, f1.shape())));
    }
    if f1.shape()[0] == 0 {
        return Err(Error::arg("f1 must be non-empty"));
    }
    if tracklet_states.rank() != 2 || tracklet_states.shape()[1] != params.d {
        return Err(Error::shape(format!(
            "tracklet states must be [N, {}], got {:?}",
            params.d,
            tracklet_states.shape()
        )));
    }
    if tracklet_states.shape()[0] != tracklet_ids.len() {
        return Err(Error::shape(format!(
            "{} tracklet states but {} ids",
            tracklet_states.shape()[0],
            tracklet_ids.len()
        )));
    }
    let distinct: BTreeSet<TrackId> = tracklet_ids.iter().copied().collect();
    if distinct.len() != tracklet_ids.len() {
        return Err(Error::invariant("tracklet ids must be distinct"));
    }
    for c in candidates {
        if c.embedding.shape() != [params.d] {
            return Err(Error::shape(format!(
                "candidate embedding must be [{}], got {:?}",
                params.d,
                c.embedding.shape()
            )));
        }
    }

    let n_can = candidates.len();
    let n = n_can + tracklet_ids.len();
    if n == 0 {
        return Ok(vec![]);
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for c in candidates {
        rows.push(c.embedding.data().to_vec());
    }
    for i in 0..tracklet_ids.len() {
        rows.push(tracklet_states.row(i).to_vec());
    }
    let mut x = Tensor::from_rows(&rows)?;
    for layer in &params.layers {
        let s = attend(&x, &x, &x, &layer.self_attn)?;
        x = params.norm.apply(&x.add(&s)?)?;
        let c = attend(&x, f1, f1, &layer.cross_attn)?;
        x = params.norm.apply(&x.add(&c)?)?;
        let f = layer.ffn.apply(&x)?;
        x = params.norm.apply(&x.add(&f)?)?;
    }
    let box_logits = params.box_head.apply(&x)?;
    let obj_logits = params.obj_head.apply(&x)?;
    let uni_logits = params.uni_head.apply(&x)?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let b = box_logits.row(i);
        let bbox = BoxCwh::new(sigmoid(b[0]), sigmoid(b[1]), sigmoid(b[2]), sigmoid(b[3]));
        let embedding = Tensor::new(vec![params.d], x.row(i).to_vec())?;
        let o = sigmoid(obj_logits.get2(i, 0));
        let entry = if i < n_can {
            QueryEntry::candidate(embedding, bbox, o, sigmoid(uni_logits.get2(i, 0)))?
        } else {
            QueryEntry::tracklet(tracklet_ids[i - n_can], embedding, bbox, o)?
        };
        out.push(entry);
    }
    Ok(out)
}

fn l1_distance(a: &BoxCwh, b: &BoxCwh) -> f64 {
    (a.cx - b.cx).abs() + (a.cy - b.cy).abs() + (a.w - b.w).abs() + (a.h - b.h).abs()
}

/// Label every entry for supervision. Tracklet entries are labeled by
/// identity visibility; candidate entries are matched to ground truth by
/// minimum-cost bipartite assignment over an objectness + L1 + GIoU cost.
/// A matched candidate whose identity is already tracked is a duplicate
/// (target uniqueness 0); a matched new identity gets target uniqueness 1.
/// The returned assignment is over candidate entries (pair rows are entry
/// indices) and ground-truth indices.
pub fn assign_supervision(
    entries: &[QueryEntry],
    gt: &[GtInstance],
    tracked_ids: &BTreeSet<TrackId>,
) -> Result<(Assignment, Vec<SupervisionTarget>)> {
    let mut gt_by_id: BTreeMap<TrackId, usize> = BTreeMap::new();
    for (j, g) in gt.iter().enumerate() {
        if gt_by_id.insert(g.id, j).is_some() {
            return Err(Error::invariant(format!("ground truth repeats id {}", g.id)));
        }
    }

    let mut targets = vec![SupervisionTarget::background(); entries.len()];
    let mut cand_idx: Vec<usize> = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        match e.kind {
            QueryKind::Candidate => cand_idx.push(i),
            QueryKind::Tracklet => {
                let id = e.source_id.ok_or_else(|| {
                    Error::invariant("tracklet entry without a source id")
                })?;
                if let Some(&j) = gt_by_id.get(&id) {
                    targets[i] = SupervisionTarget {
                        objectness: 1.0,
                        uniqueness: None,
                        bbox: Some(gt[j].bbox),
                    };
                }
            }
        }
    }

    if cand_idx.is_empty() || gt.is_empty() {
        let assignment = Assignment {
            pairs: vec![],
            unmatched_rows: cand_idx,
            unmatched_cols: (0..gt.len()).collect(),
            total_cost: 0.0,
        };
        return Ok((assignment, targets));
    }

    let (w_cls, w_l1, w_giou) = MATCH_WEIGHTS;
    let mut cost = Tensor::zeros(vec![cand_idx.len(), gt.len()]);
    for (r, &i) in cand_idx.iter().enumerate() {
        let e = &entries[i];
        for (c, g) in gt.iter().enumerate() {
            let v = w_cls * (-e.objectness)
                + w_l1 * l1_distance(&e.bbox, &g.bbox)
                + w_giou * (1.0 - giou(&e.bbox, &g.bbox));
            cost.set2(r, c, v);
        }
    }
    let raw = hungarian(&cost)?;
    let pairs: Vec<(usize, usize)> = raw.pairs.iter().map(|&(r, c)| (cand_idx[r], c)).collect();
    for &(i, c) in &pairs {
        targets[i] = SupervisionTarget {
            objectness: 1.0,
            uniqueness: Some(if tracked_ids.contains(&gt[c].id) { 0.0 } else { 1.0 }),
            bbox: Some(gt[c].bbox),
        };
    }
    let assignment = Assignment {
        pairs,
        unmatched_rows: raw.unmatched_rows.iter().map(|&r| cand_idx[r]).collect(),
        unmatched_cols: raw.unmatched_cols,
        total_cost: raw.total_cost,
    };
    Ok((assignment, targets))
}

/// Scale a vector to unit L2 norm; the zero vector is returned unchanged.
pub fn l2_normalized(t: &Tensor) -> Tensor {
    let norm = t.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        t.clone()
    } else {
        t.scale(1.0 / norm)
    }
}

/// Bookkeeping for one live track between frames.
#[derive(Clone, Debug, Serialize)]
pub struct LiveTrack {
    pub miss_streak: usize,
    pub last_box: BoxCwh,
}

/// Mutable tracker state carried across frames of one sequence.
#[derive(Clone, Debug)]
pub struct TrackerState {
    pub buffer: MemoryBuffer,
    pub dmats: BTreeMap<TrackId, Dmat>,
    pub live: BTreeMap<TrackId, LiveTrack>,
    pub next_id: TrackId,
    pub frame_index: usize,
}

impl TrackerState {
    pub fn new(cfg: &TrackerConfig) -> Result<Self> {
        Ok(TrackerState {
            buffer: MemoryBuffer::new(cfg.n_max, cfg.t_max)?,
            dmats: BTreeMap::new(),
            live: BTreeMap::new(),
            next_id: 1,
            frame_index: 0,
        })
    }

    /// Every buffered track must have exactly one aggregation token and
    /// one live record, and the buffer's own invariants must hold.
    pub fn check_consistency(&self) -> Result<()> {
        self.buffer.check_invariants()?;
        let buffered: BTreeSet<TrackId> = self.buffer.track_ids().into_iter().collect();
        let tokens: BTreeSet<TrackId> = self.dmats.keys().copied().collect();
        let live: BTreeSet<TrackId> = self.live.keys().copied().collect();
        if buffered != tokens || buffered != live {
            return Err(Error::invariant(format!(
                "tracker state out of sync: buffer {:?}, tokens {:?}, live {:?}",
                buffered, tokens, live
            )));
        }
        Ok(())
    }
}

/// One frame of input. Raw features run through the candidate network;
/// pre-built proposals (the oracle detection route) skip it. Both routes
/// converge at the decoder, which always needs an encoded frame feature.
#[derive(Clone, Debug)]
pub enum FrameInput {
    Features(Tensor),
    Proposals { f1: Tensor, proposals: Vec<Proposal> },
}

/// Candidate network stage: encoder-decoder weights plus its learned
/// object queries.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CpnStage {
    pub params: EncoderDecoderParams,
    pub queries: ObjectQuerySet,
}

/// Everything `step` needs besides per-frame input and mutable state. The
/// candidate network is optional: proposal-route runs never touch it.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawPipelineParams")]
pub struct PipelineParams {
    pub cpn: Option<CpnStage>,
    pub encoder: EncoderBlocks,
    pub decoder: DecoderParams,
    pub strategy: AggregationStrategy,
}

#[derive(Deserialize)]
struct RawPipelineParams {
    cpn: Option<CpnStage>,
    encoder: EncoderBlocks,
    decoder: DecoderParams,
    strategy: AggregationStrategy,
}

impl TryFrom<RawPipelineParams> for PipelineParams {
    type Error = Error;

    fn try_from(r: RawPipelineParams) -> Result<Self> {
        PipelineParams::new(r.cpn, r.encoder, r.decoder, r.strategy)
    }
}

impl PipelineParams {
    pub fn new(
        cpn: Option<CpnStage>,
        encoder: EncoderBlocks,
        decoder: DecoderParams,
        strategy: AggregationStrategy,
    ) -> Result<Self> {
        if encoder.d != decoder.d {
            return Err(Error::shape(format!(
                "encoder width {} differs from decoder width {}",
                encoder.d, decoder.d
            )));
        }
        if let Some(stage) = &cpn {
            if stage.params.d != decoder.d {
                return Err(Error::shape(format!(
                    "candidate network width {} differs from decoder width {}",
                    stage.params.d, decoder.d
                )));
            }
        }
        Ok(PipelineParams { cpn, encoder, decoder, strategy })
    }
}

/// Advance one frame: propose (or accept) candidates, encode memory,
/// decode the joint query set, retain entries at or above the confidence
/// threshold, update tracks, spawn births, and terminate stale tracks.
/// Returns the emitted rows for this frame.
///
/// Emission covers retained tracklet entries and newborn candidates.
/// Retained candidates that fail the birth guard re-detect an object a
/// tracklet already reported this frame, so they are dropped rather than
/// emitted under a second id.
pub fn step(
    input: FrameInput,
    state: &mut TrackerState,
    cfg: &TrackerConfig,
    params: &PipelineParams,
) -> Result<Vec<TrackRow>> {
    state.check_consistency()?;
    let frame = state.frame_index;

    let (f1, proposals) = match input {
        FrameInput::Features(f0) => {
            let stage = params
                .cpn
                .as_ref()
                .ok_or_else(|| Error::arg("frame-feature input needs candidate network parameters"))?;
            let f1 = crate::proposal::encode_frame(&f0, &stage.params)?;
            let proposals = crate::proposal::propose(&f1, &stage.queries, &stage.params)?;
            (f1, proposals)
        }
        FrameInput::Proposals { f1, proposals } => (f1, proposals),
    };

    let ids = state.buffer.track_ids();
    let (tracklet_states, refreshed_dmats) =
        encode_all(&state.buffer, &state.dmats, &params.encoder, params.strategy)?;
    let entries = decode(&f1, &proposals, &tracklet_states, &ids, &params.decoder)?;

    let mut rows: Vec<TrackRow> = Vec::new();
    let mut present: BTreeMap<TrackId, TrackState> = BTreeMap::new();
    let mut retained_boxes: Vec<BoxCwh> = Vec::new();
    for e in entries.iter().filter(|e| e.kind == QueryKind::Tracklet) {
        let id = e.source_id.expect("tracklet entries carry their id");
        if e.confidence >= cfg.eps_conf {
            present.insert(
                id,
                TrackState::present(frame, l2_normalized(&e.embedding), e.bbox, e.confidence)?,
            );
            let track = state.live.get_mut(&id).expect("consistency checked above");
            track.miss_streak = 0;
            track.last_box = e.bbox;
            retained_boxes.push(e.bbox);
            rows.push(TrackRow { id, bbox: e.bbox, confidence: e.confidence });
        } else {
            state.live.get_mut(&id).expect("consistency checked above").miss_streak += 1;
        }
    }
    state.buffer.append_frame(frame, &present)?;
    state.dmats = refreshed_dmats;

    // Births: confident, unique, and geometrically distinct from every box
    // already reported this frame.
    for e in entries.iter().filter(|e| e.kind == QueryKind::Candidate) {
        if e.confidence < cfg.eps_conf || e.uniqueness < 0.5 {
            continue;
        }
        if retained_boxes.iter().any(|b| crate::boxes::iou(b, &e.bbox) >= cfg.tau_dup) {
            continue;
        }
        let id = state.next_id;
        state.next_id += 1;
        state
            .buffer
            .admit(id, TrackState::present(frame, l2_normalized(&e.embedding), e.bbox, e.confidence)?)?;
        state.dmats.insert(id, Dmat::birth(&params.encoder));
        state.live.insert(id, LiveTrack { miss_streak: 0, last_box: e.bbox });
        retained_boxes.push(e.bbox);
        rows.push(TrackRow { id, bbox: e.bbox, confidence: e.confidence });
    }

    // A full buffer evicts its oldest track on admission; drop the
    // bookkeeping of anything no longer buffered.
    let buffered: BTreeSet<TrackId> = state.buffer.track_ids().into_iter().collect();
    state.dmats.retain(|id, _| buffered.contains(id));
    state.live.retain(|id, _| buffered.contains(id));

    let expired: Vec<TrackId> = state
        .live
        .iter()
        .filter(|(_, t)| t.miss_streak >= cfg.k_miss)
        .map(|(&id, _)| id)
        .collect();
    for id in expired {
        state.buffer.remove(id)?;
        state.dmats.remove(&id);
        state.live.remove(&id);
    }

    state.frame_index += 1;
    state.check_consistency()?;
    Ok(rows)
}
