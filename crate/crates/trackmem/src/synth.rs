//! Synthetic scenes: seeded constant-velocity objects bouncing inside an
//! image, scripted occlusion windows, orthonormal identity embeddings, and
//! a detection oracle that perturbs the ground truth into proposals.
//! Everything derives from the scene seed; the trajectories, the identity
//! embeddings, and the detector noise use separate streams of the same
//! generator, so the ground truth is invariant to the embedding width and
//! to whether detections are drawn at all.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::boxes::BoxCwh;
use crate::error::{Error, Result};
use crate::metrics::{FrameAnnotations, MotRow};
use crate::proposal::Proposal;
use crate::tensor::Tensor;

/// One scripted disappearance: the object leaves the ground truth for
/// `duration` frames starting at `start` (1-based, inclusive).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionEvent {
    pub object: i64,
    pub start: usize,
    pub duration: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub schema_version: u32,
    pub n_objects: usize,
    pub frame_count: usize,
    pub image_width: f64,
    pub image_height: f64,
    /// Speed range in pixels per frame; each object draws one speed.
    pub min_speed: f64,
    pub max_speed: f64,
    #[serde(default)]
    pub occlusions: Vec<OcclusionEvent>,
    /// Detector noise: Gaussian std in pixels added to each box edge.
    #[serde(default)]
    pub box_jitter_px: f64,
    /// Overall scale of the embedding perturbation: components are drawn
    /// with variance std^2 / d, so the perturbation norm is about `std`.
    #[serde(default)]
    pub embedding_noise_std: f64,
    /// Probability that a visible object produces no detection.
    #[serde(default)]
    pub drop_probability: f64,
    pub seed: u64,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(Error::arg(format!(
                "unsupported scene schema version {}",
                self.schema_version
            )));
        }
        if self.n_objects == 0 {
            return Err(Error::arg("a scene needs at least one object"));
        }
        if self.frame_count == 0 {
            return Err(Error::arg("a scene needs at least one frame"));
        }
        if !(self.image_width >= 96.0) || !(self.image_height >= 96.0) {
            return Err(Error::arg("image must be at least 96x96 pixels"));
        }
        if !(0.0 <= self.min_speed && self.min_speed <= self.max_speed)
            || !self.max_speed.is_finite()
        {
            return Err(Error::arg("speed range must satisfy 0 <= min <= max"));
        }
        if self.max_speed > 0.25 * self.image_width.min(self.image_height) {
            return Err(Error::arg("max speed above a quarter of the image per frame"));
        }
        for ev in &self.occlusions {
            if ev.duration == 0 {
                return Err(Error::arg("occlusion durations must be at least one frame"));
            }
            if ev.start == 0 {
                return Err(Error::arg("occlusion start frames are 1-based"));
            }
            if ev.object < 1 || ev.object > self.n_objects as i64 {
                return Err(Error::arg(format!(
                    "occlusion names object {} outside 1..={}",
                    ev.object, self.n_objects
                )));
            }
        }
        if !(self.box_jitter_px >= 0.0) || !(self.embedding_noise_std >= 0.0) {
            return Err(Error::arg("noise deviations must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(Error::arg("drop probability must lie in [0,1]"));
        }
        Ok(())
    }

    fn occluded(&self, object: i64, frame: usize) -> bool {
        self.occlusions
            .iter()
            .any(|ev| ev.object == object && frame >= ev.start && frame < ev.start + ev.duration)
    }
}

/// Pixel left-top-width-height to the normalized center form.
pub fn to_normalized(ltwh: [f64; 4], image_w: f64, image_h: f64) -> Result<BoxCwh> {
    let b = BoxCwh::new(
        (ltwh[0] + ltwh[2] / 2.0) / image_w,
        (ltwh[1] + ltwh[3] / 2.0) / image_h,
        ltwh[2] / image_w,
        ltwh[3] / image_h,
    );
    for v in [b.cx, b.cy, b.w, b.h] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::arg(format!(
                "box {:?} leaves the unit square after normalization",
                ltwh
            )));
        }
    }
    Ok(b)
}

/// Normalized center form back to pixel left-top-width-height.
pub fn to_pixels(b: &BoxCwh, image_w: f64, image_h: f64) -> [f64; 4] {
    [
        (b.cx - b.w / 2.0) * image_w,
        (b.cy - b.h / 2.0) * image_h,
        b.w * image_w,
        b.h * image_h,
    ]
}

/// Orthonormal identity embeddings: seeded Gaussian rows made mutually
/// orthogonal by sequential projection. Needs n <= d.
fn orthonormal_embeddings(n: usize, d: usize, rng: &mut ChaCha12Rng) -> Result<Vec<Vec<f64>>> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal is valid");
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        loop {
            let mut v: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
            for prev in &rows {
                let proj: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (vi, pi) in v.iter_mut().zip(prev) {
                    *vi -= proj * pi;
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for vi in &mut v {
                    *vi /= norm;
                }
                rows.push(v);
                break;
            }
        }
    }
    Ok(rows)
}

struct Mover {
    left: f64,
    top: f64,
    w: f64,
    h: f64,
    speed: f64,
    heading: f64,
}

impl Mover {
    fn advance(&mut self, cfg: &SceneConfig, rng: &mut ChaCha12Rng) {
        let wobble = Normal::new(0.0, 0.05).expect("fixed std");
        self.heading += wobble.sample(rng);
        let mut vx = self.speed * self.heading.cos();
        let mut vy = self.speed * self.heading.sin();
        self.left += vx;
        self.top += vy;
        let max_left = cfg.image_width - self.w;
        let max_top = cfg.image_height - self.h;
        while self.left < 0.0 || self.left > max_left {
            if self.left < 0.0 {
                self.left = -self.left;
            } else {
                self.left = 2.0 * max_left - self.left;
            }
            vx = -vx;
        }
        while self.top < 0.0 || self.top > max_top {
            if self.top < 0.0 {
                self.top = -self.top;
            } else {
                self.top = 2.0 * max_top - self.top;
            }
            vy = -vy;
        }
        self.heading = vy.atan2(vx);
    }

    fn ltwh(&self) -> [f64; 4] {
        [self.left, self.top, self.w, self.h]
    }
}

/// Build the ground truth and the identity embeddings (one orthonormal
/// row of width `d` per object). Objects spawn inside the image with low
/// mutual overlap, move at constant speed with a small seeded heading
/// wobble, and reflect off the image edges. Occluded frames omit the
/// object entirely.
pub fn generate_scene(
    cfg: &SceneConfig,
    d: usize,
) -> Result<(Vec<FrameAnnotations>, BTreeMap<i64, Tensor>)> {
    cfg.validate()?;
    if cfg.n_objects > d {
        return Err(Error::arg(format!(
            "{} objects cannot have mutually orthogonal embeddings of width {}",
            cfg.n_objects, d
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);

    // Embeddings draw from their own stream so the trajectories do not
    // depend on the embedding width.
    let mut emb_rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    emb_rng.set_stream(2);
    let rows = orthonormal_embeddings(cfg.n_objects, d, &mut emb_rng)?;
    let mut embeddings = BTreeMap::new();
    for (i, row) in rows.into_iter().enumerate() {
        embeddings.insert(i as i64 + 1, Tensor::new(vec![d], row)?);
    }

    let mut movers: Vec<Mover> = Vec::with_capacity(cfg.n_objects);
    for _ in 0..cfg.n_objects {
        let w = rng.random_range(24.0..48.0);
        let h = rng.random_range(24.0..48.0);
        let mut placed = None;
        for _ in 0..200 {
            let left = rng.random_range(0.0..(cfg.image_width - w));
            let top = rng.random_range(0.0..(cfg.image_height - h));
            let candidate = [left, top, w, h];
            let crowded = movers
                .iter()
                .any(|m| crate::boxes::iou_ltwh(candidate, m.ltwh()) >= 0.3);
            if !crowded {
                placed = Some((left, top));
                break;
            }
        }
        let (left, top) = placed.unwrap_or((0.0, 0.0));
        let speed = if cfg.max_speed > cfg.min_speed {
            rng.random_range(cfg.min_speed..cfg.max_speed)
        } else {
            cfg.min_speed
        };
        let heading = rng.random_range(0.0..std::f64::consts::TAU);
        movers.push(Mover { left, top, w, h, speed, heading });
    }

    let mut gt = Vec::with_capacity(cfg.frame_count);
    for frame in 1..=cfg.frame_count {
        if frame > 1 {
            for m in &mut movers {
                m.advance(cfg, &mut rng);
            }
        }
        let mut rows = Vec::new();
        for (i, m) in movers.iter().enumerate() {
            let id = i as i64 + 1;
            if cfg.occluded(id, frame) {
                continue;
            }
            rows.push(MotRow {
                id,
                left: m.left,
                top: m.top,
                width: m.w,
                height: m.h,
                confidence: 1.0,
            });
        }
        gt.push(FrameAnnotations::new(frame, rows)?);
    }
    Ok((gt, embeddings))
}

/// Detector stand-in: each visible ground-truth row becomes a proposal
/// with a jittered box, a perturbed copy of its identity embedding, and an
/// objectness near one; rows drop out independently with the configured
/// probability. Output rows carry no identity labels. Uses its own stream
/// of the scene seed, so the same scene stays bit-identical whether or
/// not detections are drawn.
pub fn oracle_detections(
    gt: &[FrameAnnotations],
    embeddings: &BTreeMap<i64, Tensor>,
    cfg: &SceneConfig,
) -> Result<Vec<Vec<Proposal>>> {
    cfg.validate()?;
    let d = match embeddings.values().next() {
        Some(e) => e.len(),
        None => return Err(Error::arg("oracle detections need identity embeddings")),
    };
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let jitter = Normal::new(0.0, cfg.box_jitter_px).map_err(|_| Error::arg("bad jitter std"))?;
    let noise = Normal::new(0.0, cfg.embedding_noise_std / (d as f64).sqrt())
        .map_err(|_| Error::arg("bad embedding noise std"))?;

    let mut out = Vec::with_capacity(gt.len());
    for frame in gt {
        let mut proposals = Vec::new();
        for row in &frame.rows {
            let e = embeddings
                .get(&row.id)
                .ok_or_else(|| Error::arg(format!("no identity embedding for object {}", row.id)))?;
            if rng.random_range(0.0..1.0) < cfg.drop_probability {
                continue;
            }
            let ltwh = [
                row.left + jitter.sample(&mut rng),
                row.top + jitter.sample(&mut rng),
                (row.width + jitter.sample(&mut rng)).max(1.0),
                (row.height + jitter.sample(&mut rng)).max(1.0),
            ];
            let bbox = clamped_normalized(ltwh, cfg.image_width, cfg.image_height);
            let perturbed: Vec<f64> = e.data().iter().map(|&v| v + noise.sample(&mut rng)).collect();
            let objectness = 1.0 - rng.random_range(0.0..0.05);
            proposals.push(Proposal::new(Tensor::new(vec![d], perturbed)?, bbox, objectness)?);
        }
        out.push(proposals);
    }
    Ok(out)
}

/// Normalization that tolerates jitter pushing a box slightly past the
/// image edge: every component is clamped into the open unit interval.
pub fn clamped_normalized(ltwh: [f64; 4], image_w: f64, image_h: f64) -> BoxCwh {
    let clamp = |v: f64| v.clamp(1e-4, 1.0 - 1e-4);
    BoxCwh::new(
        clamp((ltwh[0] + ltwh[2] / 2.0) / image_w),
        clamp((ltwh[1] + ltwh[3] / 2.0) / image_h),
        clamp(ltwh[2] / image_w),
        clamp(ltwh[3] / image_h),
    )
}
