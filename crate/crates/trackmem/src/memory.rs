//! Per-track FIFO state histories with capacity and horizon limits.
//! Absent frames are stored as explicit zero-padded states so every live
//! track always has a contiguous window of the last T_max frames.

use std::collections::{BTreeMap, VecDeque};

use indexmap::IndexMap;
use serde::Serialize;

use crate::boxes::BoxCwh;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tracker::TrackId;

/// One frame of one track's history.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackState {
    #[serde(rename = "frame")]
    pub frame_index: usize,
    pub present: bool,
    #[serde(rename = "box")]
    pub bbox: BoxCwh,
    pub confidence: f64,
    pub embedding: Tensor,
}

impl TrackState {
    pub fn present(
        frame_index: usize,
        embedding: Tensor,
        bbox: BoxCwh,
        confidence: f64,
    ) -> Result<Self> {
        if embedding.rank() != 1 {
            return Err(Error::shape("track state embedding must be 1-D".to_string()));
        }
        let inside = [bbox.cx, bbox.cy, bbox.w, bbox.h]
            .iter()
            .all(|v| (0.0..=1.0).contains(v));
        if !inside {
            return Err(Error::arg(format!("track state box out of [0,1]: {:?}", bbox)));
        }
        if !confidence.is_finite() || !(0.0..=1.0).contains(&confidence) {
            return Err(Error::arg(format!("confidence {} outside [0,1]", confidence)));
        }
        Ok(TrackState { frame_index, present: true, bbox, confidence, embedding })
    }

    /// Zero-padded placeholder for a frame where the object was not seen.
    pub fn absent(frame_index: usize, d: usize) -> Self {
        TrackState {
            frame_index,
            present: false,
            bbox: BoxCwh::ZERO,
            confidence: 0.0,
            embedding: Tensor::zeros(vec![d]),
        }
    }

    fn check(&self) -> Result<()> {
        if !self.present {
            if self.embedding.data().iter().any(|&v| v != 0.0) || !self.bbox.is_zero() {
                return Err(Error::invariant(format!(
                    "absent state at frame {} is not zero-padded",
                    self.frame_index
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::invariant(format!(
                "confidence {} outside [0,1] at frame {}",
                self.confidence, self.frame_index
            )));
        }
        Ok(())
    }
}

/// FIFO memory over tracks and frames. Cloning yields an independent
/// snapshot, so mutation never disturbs previously taken copies.
#[derive(Clone, Debug)]
pub struct MemoryBuffer {
    n_max: usize,
    t_max: usize,
    tracks: IndexMap<TrackId, VecDeque<TrackState>>,
}

impl MemoryBuffer {
    pub fn new(n_max: usize, t_max: usize) -> Result<Self> {
        if n_max == 0 || t_max == 0 {
            return Err(Error::arg("buffer capacity and horizon must be positive"));
        }
        Ok(MemoryBuffer { n_max, t_max, tracks: IndexMap::new() })
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn contains(&self, track_id: TrackId) -> bool {
        self.tracks.contains_key(&track_id)
    }

    /// Live track ids in admission order.
    pub fn track_ids(&self) -> Vec<TrackId> {
        self.tracks.keys().copied().collect()
    }

    pub fn history_len(&self, track_id: TrackId) -> Result<usize> {
        self.queue(track_id).map(|q| q.len())
    }

    fn queue(&self, track_id: TrackId) -> Result<&VecDeque<TrackState>> {
        self.tracks
            .get(&track_id)
            .ok_or_else(|| Error::arg(format!("unknown track id {}", track_id)))
    }

    /// Add a new track with its initial state. At capacity, the
    /// oldest-admitted track is evicted first.
    pub fn admit(&mut self, track_id: TrackId, initial_state: TrackState) -> Result<()> {
        if self.tracks.contains_key(&track_id) {
            return Err(Error::arg(format!("track id {} already admitted", track_id)));
        }
        initial_state.check()?;
        if self.tracks.len() == self.n_max {
            self.tracks.shift_remove_index(0);
        }
        let mut q = VecDeque::with_capacity(self.t_max.min(64));
        q.push_back(initial_state);
        self.tracks.insert(track_id, q);
        Ok(())
    }

    /// Record one frame for every live track: the supplied state where
    /// given, a zero-padded absent state otherwise. Queues longer than the
    /// horizon drop their oldest entry.
    pub fn append_frame(
        &mut self,
        frame_index: usize,
        states: &BTreeMap<TrackId, TrackState>,
    ) -> Result<()> {
        for (&id, s) in states {
            if !self.tracks.contains_key(&id) {
                return Err(Error::arg(format!("state supplied for unknown track id {}", id)));
            }
            if s.frame_index != frame_index {
                return Err(Error::arg(format!(
                    "state for track {} carries frame {} but the buffer is appending frame {}",
                    id, s.frame_index, frame_index
                )));
            }
            s.check()?;
        }
        for (&id, q) in self.tracks.iter_mut() {
            let last = q.back().expect("queues are never empty");
            if last.frame_index + 1 != frame_index {
                return Err(Error::arg(format!(
                    "track {} is at frame {}, cannot append frame {}",
                    id, last.frame_index, frame_index
                )));
            }
            let state = match states.get(&id) {
                Some(s) => s.clone(),
                None => TrackState::absent(frame_index, last.embedding.len()),
            };
            q.push_back(state);
            if q.len() > self.t_max {
                q.pop_front();
            }
        }
        Ok(())
    }

    /// The most recent (at most) `t` states of a track, oldest first.
    pub fn window(&self, track_id: TrackId, t: usize) -> Result<Vec<TrackState>> {
        if t == 0 {
            return Err(Error::arg("window length must be positive"));
        }
        let q = self.queue(track_id)?;
        let skip = q.len().saturating_sub(t);
        Ok(q.iter().skip(skip).cloned().collect())
    }

    pub fn remove(&mut self, track_id: TrackId) -> Result<()> {
        // shift_remove keeps the admission order of the remaining tracks.
        self.tracks
            .shift_remove(&track_id)
            .map(|_| ())
            .ok_or_else(|| Error::arg(format!("unknown track id {}", track_id)))
    }

    /// Verify every structural invariant; the per-frame loop runs this
    /// after each mutation in debug and the tests always do.
    pub fn check_invariants(&self) -> Result<()> {
        if self.tracks.len() > self.n_max {
            return Err(Error::invariant(format!(
                "{} tracks exceed capacity {}",
                self.tracks.len(),
                self.n_max
            )));
        }
        for (&id, q) in &self.tracks {
            if q.is_empty() {
                return Err(Error::invariant(format!("track {} has an empty history", id)));
            }
            if q.len() > self.t_max {
                return Err(Error::invariant(format!(
                    "track {} history {} exceeds horizon {}",
                    id,
                    q.len(),
                    self.t_max
                )));
            }
            for pair in q.iter().collect::<Vec<_>>().windows(2) {
                if pair[0].frame_index + 1 != pair[1].frame_index {
                    return Err(Error::invariant(format!(
                        "track {} skips from frame {} to {}",
                        id, pair[0].frame_index, pair[1].frame_index
                    )));
                }
            }
            for s in q {
                s.check()?;
            }
        }
        Ok(())
    }

    /// Debug snapshot: `{track_id: [state, ...]}` with states oldest
    /// first.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (&id, q) in &self.tracks {
            let states: Vec<serde_json::Value> = q
                .iter()
                .map(|s| serde_json::to_value(s).expect("track states always serialize"))
                .collect();
            map.insert(id.to_string(), serde_json::Value::Array(states));
        }
        serde_json::Value::Object(map)
    }
}
