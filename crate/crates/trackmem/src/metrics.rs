//! Tracking evaluation: CLEAR counts with match persistence, MOTA, IDF1
//! with a globally optimal identity mapping, and multi-threshold HOTA.
//! Boxes here are pixel-coordinate (left, top, width, height) rows as they
//! appear in result files, unlike the normalized center boxes inside the
//! tracker.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assign::hungarian;
use crate::boxes::iou_ltwh;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Cost standing in for a forbidden pair inside Hungarian matrices; any
/// real pair costs at most 1, so forbidden picks are detected afterwards.
const FORBIDDEN: f64 = 1e6;

/// One result-file row: a track id with a pixel box and a confidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotRow {
    pub id: i64,
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub confidence: f64,
}

impl MotRow {
    pub fn ltwh(&self) -> [f64; 4] {
        [self.left, self.top, self.width, self.height]
    }
}

/// All rows of one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFrameAnnotations")]
pub struct FrameAnnotations {
    pub frame_index: usize,
    pub rows: Vec<MotRow>,
}

#[derive(Deserialize)]
struct RawFrameAnnotations {
    frame_index: usize,
    rows: Vec<MotRow>,
}

impl TryFrom<RawFrameAnnotations> for FrameAnnotations {
    type Error = Error;

    fn try_from(r: RawFrameAnnotations) -> Result<Self> {
        FrameAnnotations::new(r.frame_index, r.rows)
    }
}

impl FrameAnnotations {
    pub fn new(frame_index: usize, rows: Vec<MotRow>) -> Result<Self> {
        if frame_index == 0 {
            return Err(Error::arg("frame indices are 1-based"));
        }
        let mut seen = BTreeMap::new();
        for r in &rows {
            if !(r.width > 0.0) || !(r.height > 0.0) {
                return Err(Error::arg(format!(
                    "frame {}: track {} has non-positive box {}x{}",
                    frame_index, r.id, r.width, r.height
                )));
            }
            let fields = [r.left, r.top, r.width, r.height, r.confidence];
            if fields.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg(format!(
                    "frame {}: track {} has a non-finite field",
                    frame_index, r.id
                )));
            }
            if seen.insert(r.id, ()).is_some() {
                return Err(Error::arg(format!(
                    "frame {}: track id {} appears twice",
                    frame_index, r.id
                )));
            }
        }
        Ok(FrameAnnotations { frame_index, rows })
    }
}

/// Aggregated CLEAR matching outcome over a sequence.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClearCounts {
    pub false_positives: usize,
    pub false_negatives: usize,
    pub id_switches: usize,
    pub gt_total: usize,
    /// Per frame (sorted by frame index): matched (gt id, pred id) pairs.
    pub matches: Vec<(usize, Vec<(i64, i64)>)>,
}

fn frames_by_index<'a>(
    list: &'a [FrameAnnotations],
    name: &str,
) -> Result<BTreeMap<usize, &'a FrameAnnotations>> {
    let mut map = BTreeMap::new();
    for f in list {
        if map.insert(f.frame_index, f).is_some() {
            return Err(Error::arg(format!(
                "{} contains frame {} twice",
                name, f.frame_index
            )));
        }
    }
    Ok(map)
}

/// Threshold-feasible minimum-cost matching between two row sets. Returns
/// (row index, column index) pairs whose IoU clears the threshold.
fn match_rows(gt: &[MotRow], pred: &[MotRow], threshold: f64) -> Result<Vec<(usize, usize)>> {
    if gt.is_empty() || pred.is_empty() {
        return Ok(Vec::new());
    }
    let mut cost = Tensor::zeros(vec![gt.len(), pred.len()]);
    for (i, g) in gt.iter().enumerate() {
        for (j, p) in pred.iter().enumerate() {
            let iou = iou_ltwh(g.ltwh(), p.ltwh());
            cost.set2(i, j, if iou >= threshold { 1.0 - iou } else { FORBIDDEN });
        }
    }
    let assignment = hungarian(&cost)?;
    Ok(assignment
        .pairs
        .into_iter()
        .filter(|&(i, j)| cost.get2(i, j) < FORBIDDEN / 2.0)
        .collect())
}

/// CLEAR matching over aligned frames: matches persist while their IoU
/// stays above the threshold, new pairs fill in by Hungarian matching,
/// and a ground truth rebinding to a different id than its last known
/// match (gaps included) counts one id switch.
pub fn match_frames(
    gt: &[FrameAnnotations],
    pred: &[FrameAnnotations],
    iou_threshold: f64,
) -> Result<ClearCounts> {
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(Error::arg("IoU threshold must lie in [0,1]"));
    }
    let gt_frames = frames_by_index(gt, "ground truth")?;
    let pred_frames = frames_by_index(pred, "predictions")?;
    let empty = Vec::new();

    let mut counts = ClearCounts {
        false_positives: 0,
        false_negatives: 0,
        id_switches: 0,
        gt_total: 0,
        matches: Vec::new(),
    };
    // Matches of the previous frame, and each gt id's last matched pred id
    // regardless of how long ago.
    let mut carried: BTreeMap<i64, i64> = BTreeMap::new();
    let mut last_bound: BTreeMap<i64, i64> = BTreeMap::new();

    let mut all_frames: Vec<usize> = gt_frames.keys().chain(pred_frames.keys()).copied().collect();
    all_frames.sort_unstable();
    all_frames.dedup();

    for frame in all_frames {
        let gt_rows = gt_frames.get(&frame).map(|f| &f.rows).unwrap_or(&empty);
        let pred_rows = pred_frames.get(&frame).map(|f| &f.rows).unwrap_or(&empty);
        counts.gt_total += gt_rows.len();

        let gt_by_id: BTreeMap<i64, &MotRow> = gt_rows.iter().map(|r| (r.id, r)).collect();
        let pred_by_id: BTreeMap<i64, &MotRow> = pred_rows.iter().map(|r| (r.id, r)).collect();

        let mut frame_matches: Vec<(i64, i64)> = Vec::new();
        let mut used_gt: BTreeMap<i64, ()> = BTreeMap::new();
        let mut used_pred: BTreeMap<i64, ()> = BTreeMap::new();
        for (&gid, &pid) in &carried {
            if let (Some(g), Some(p)) = (gt_by_id.get(&gid), pred_by_id.get(&pid)) {
                if iou_ltwh(g.ltwh(), p.ltwh()) >= iou_threshold {
                    frame_matches.push((gid, pid));
                    used_gt.insert(gid, ());
                    used_pred.insert(pid, ());
                }
            }
        }

        let free_gt: Vec<&MotRow> =
            gt_rows.iter().filter(|r| !used_gt.contains_key(&r.id)).collect();
        let free_pred: Vec<&MotRow> =
            pred_rows.iter().filter(|r| !used_pred.contains_key(&r.id)).collect();
        let owned_gt: Vec<MotRow> = free_gt.iter().map(|r| (*r).clone()).collect();
        let owned_pred: Vec<MotRow> = free_pred.iter().map(|r| (*r).clone()).collect();
        for (i, j) in match_rows(&owned_gt, &owned_pred, iou_threshold)? {
            let gid = owned_gt[i].id;
            let pid = owned_pred[j].id;
            if let Some(&prev) = last_bound.get(&gid) {
                if prev != pid {
                    counts.id_switches += 1;
                }
            }
            frame_matches.push((gid, pid));
        }

        counts.false_negatives += gt_rows.len() - frame_matches.len();
        counts.false_positives += pred_rows.len() - frame_matches.len();

        frame_matches.sort_unstable();
        carried = frame_matches.iter().copied().collect();
        for &(gid, pid) in &frame_matches {
            last_bound.insert(gid, pid);
        }
        counts.matches.push((frame, frame_matches));
    }
    Ok(counts)
}

/// Multi-object tracking accuracy over aggregated CLEAR counts.
pub fn mota(counts: &ClearCounts) -> Result<f64> {
    if counts.gt_total == 0 {
        return Err(Error::arg("MOTA needs at least one ground-truth box"));
    }
    let errors = (counts.false_positives + counts.false_negatives + counts.id_switches) as f64;
    Ok(1.0 - errors / counts.gt_total as f64)
}

struct Trajectories {
    /// id -> frame -> box
    tracks: BTreeMap<i64, BTreeMap<usize, [f64; 4]>>,
}

impl Trajectories {
    fn build(frames: &[FrameAnnotations]) -> Self {
        let mut tracks: BTreeMap<i64, BTreeMap<usize, [f64; 4]>> = BTreeMap::new();
        for f in frames {
            for r in &f.rows {
                tracks.entry(r.id).or_default().insert(f.frame_index, r.ltwh());
            }
        }
        Trajectories { tracks }
    }
}

/// Frames in which both trajectories exist with IoU at or above the
/// threshold.
fn trajectory_overlap(
    a: &BTreeMap<usize, [f64; 4]>,
    b: &BTreeMap<usize, [f64; 4]>,
    threshold: f64,
) -> usize {
    a.iter()
        .filter(|(frame, ga)| {
            b.get(frame).map(|pb| iou_ltwh(**ga, *pb) >= threshold).unwrap_or(false)
        })
        .count()
}

/// Identity-preservation score with its TP/FP/FN identity counts. The
/// identity mapping maximizes total per-frame overlap, which is exactly
/// the assignment minimizing IDFP + IDFN.
pub fn idf1(
    gt: &[FrameAnnotations],
    pred: &[FrameAnnotations],
    iou_threshold: f64,
) -> Result<(f64, usize, usize, usize)> {
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(Error::arg("IoU threshold must lie in [0,1]"));
    }
    frames_by_index(gt, "ground truth")?;
    frames_by_index(pred, "predictions")?;
    let g = Trajectories::build(gt);
    let p = Trajectories::build(pred);
    let gt_len_total: usize = g.tracks.values().map(|t| t.len()).sum();
    let pred_len_total: usize = p.tracks.values().map(|t| t.len()).sum();

    let gids: Vec<i64> = g.tracks.keys().copied().collect();
    let pids: Vec<i64> = p.tracks.keys().copied().collect();
    let mut idtp = 0usize;
    if !gids.is_empty() && !pids.is_empty() {
        let mut overlap = Tensor::zeros(vec![gids.len(), pids.len()]);
        let mut max_ov = 0.0f64;
        for (i, gid) in gids.iter().enumerate() {
            for (j, pid) in pids.iter().enumerate() {
                let ov =
                    trajectory_overlap(&g.tracks[gid], &p.tracks[pid], iou_threshold) as f64;
                overlap.set2(i, j, ov);
                max_ov = max_ov.max(ov);
            }
        }
        // Minimizing (max - overlap) over a maximum matching maximizes the
        // total overlap; every maximum matching has the same cardinality.
        let mut cost = Tensor::zeros(vec![gids.len(), pids.len()]);
        for i in 0..gids.len() {
            for j in 0..pids.len() {
                cost.set2(i, j, max_ov - overlap.get2(i, j));
            }
        }
        let assignment = hungarian(&cost)?;
        for (i, j) in assignment.pairs {
            idtp += overlap.get2(i, j) as usize;
        }
    }
    let idfn = gt_len_total - idtp;
    let idfp = pred_len_total - idtp;
    let denom = 2 * idtp + idfp + idfn;
    let score = if denom == 0 { 0.0 } else { 2.0 * idtp as f64 / denom as f64 };
    Ok((score, idtp, idfp, idfn))
}

/// Per-threshold and averaged higher-order tracking accuracy.
#[derive(Clone, Debug, Serialize)]
pub struct HotaReport {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    /// (alpha, DetA, AssA, HOTA) per threshold, alpha ascending.
    pub per_alpha: Vec<(f64, f64, f64, f64)>,
}

/// The 19 evaluation thresholds 0.05, 0.10, ..., 0.95.
pub fn hota_alphas() -> Vec<f64> {
    (1..=19).map(|k| k as f64 * 0.05).collect()
}

/// Higher-order tracking accuracy: per threshold, optimal per-frame TP
/// matching, detection accuracy, association accuracy averaged over TPs,
/// and their geometric mean; the report averages over all thresholds.
pub fn hota(gt: &[FrameAnnotations], pred: &[FrameAnnotations]) -> Result<HotaReport> {
    let gt_frames = frames_by_index(gt, "ground truth")?;
    let pred_frames = frames_by_index(pred, "predictions")?;
    let empty = Vec::new();
    let mut all_frames: Vec<usize> = gt_frames.keys().chain(pred_frames.keys()).copied().collect();
    all_frames.sort_unstable();
    all_frames.dedup();

    let gt_count: BTreeMap<i64, usize> = count_ids(gt);
    let pred_count: BTreeMap<i64, usize> = count_ids(pred);

    let mut per_alpha = Vec::new();
    for alpha in hota_alphas() {
        let mut tp = 0usize;
        let mut fn_ = 0usize;
        let mut fp = 0usize;
        let mut pair_tp: BTreeMap<(i64, i64), usize> = BTreeMap::new();
        for &frame in &all_frames {
            let gt_rows = gt_frames.get(&frame).map(|f| &f.rows).unwrap_or(&empty);
            let pred_rows = pred_frames.get(&frame).map(|f| &f.rows).unwrap_or(&empty);
            let pairs = match_rows(gt_rows, pred_rows, alpha)?;
            tp += pairs.len();
            fn_ += gt_rows.len() - pairs.len();
            fp += pred_rows.len() - pairs.len();
            for (i, j) in pairs {
                *pair_tp.entry((gt_rows[i].id, pred_rows[j].id)).or_insert(0) += 1;
            }
        }
        let deta = if tp + fn_ + fp == 0 { 0.0 } else { tp as f64 / (tp + fn_ + fp) as f64 };
        let assa = if tp == 0 {
            0.0
        } else {
            let mut acc = 0.0;
            for (&(gid, pid), &tpa) in &pair_tp {
                let fna = gt_count[&gid] - tpa;
                let fpa = pred_count[&pid] - tpa;
                acc += tpa as f64 * (tpa as f64 / (tpa + fna + fpa) as f64);
            }
            acc / tp as f64
        };
        per_alpha.push((alpha, deta, assa, (deta * assa).sqrt()));
    }
    let n = per_alpha.len() as f64;
    Ok(HotaReport {
        hota: per_alpha.iter().map(|a| a.3).sum::<f64>() / n,
        deta: per_alpha.iter().map(|a| a.1).sum::<f64>() / n,
        assa: per_alpha.iter().map(|a| a.2).sum::<f64>() / n,
        per_alpha,
    })
}

fn count_ids(frames: &[FrameAnnotations]) -> BTreeMap<i64, usize> {
    let mut counts = BTreeMap::new();
    for f in frames {
        for r in &f.rows {
            *counts.entry(r.id).or_insert(0) += 1;
        }
    }
    counts
}

/// Full evaluation bundle as printed by the command line.
#[derive(Clone, Debug, Serialize)]
pub struct MetricReport {
    pub mota: f64,
    pub idf1: f64,
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    #[serde(rename = "fp")]
    pub false_positives: usize,
    #[serde(rename = "fn")]
    pub false_negatives: usize,
    #[serde(rename = "idsw")]
    pub id_switches: usize,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

/// Run the whole suite at one CLEAR/IDF1 threshold.
pub fn evaluate(
    gt: &[FrameAnnotations],
    pred: &[FrameAnnotations],
    iou_threshold: f64,
) -> Result<MetricReport> {
    let clear = match_frames(gt, pred, iou_threshold)?;
    let mota = mota(&clear)?;
    let (idf1, idtp, idfp, idfn) = idf1(gt, pred, iou_threshold)?;
    let h = hota(gt, pred)?;
    Ok(MetricReport {
        mota,
        idf1,
        hota: h.hota,
        deta: h.deta,
        assa: h.assa,
        false_positives: clear.false_positives,
        false_negatives: clear.false_negatives,
        id_switches: clear.id_switches,
        idtp,
        idfp,
        idfn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn row(id: i64, left: f64, top: f64) -> MotRow {
        MotRow { id, left, top, width: 10.0, height: 20.0, confidence: 1.0 }
    }

    fn frame(index: usize, rows: Vec<MotRow>) -> FrameAnnotations {
        FrameAnnotations::new(index, rows).unwrap()
    }

    /// A straight 3-track sequence used by several tests.
    fn straight_gt(frames: usize) -> Vec<FrameAnnotations> {
        (1..=frames)
            .map(|f| {
                frame(
                    f,
                    vec![
                        row(1, 0.0 + f as f64, 0.0),
                        row(2, 100.0 + f as f64, 0.0),
                        row(3, 200.0 + f as f64, 0.0),
                    ],
                )
            })
            .collect()
    }

    #[test]
    fn frame_annotations_validate_rows() {
        assert!(FrameAnnotations::new(0, vec![]).is_err());
        assert!(FrameAnnotations::new(1, vec![row(1, 0.0, 0.0), row(1, 5.0, 0.0)]).is_err());
        let mut bad = row(1, 0.0, 0.0);
        bad.width = 0.0;
        assert!(FrameAnnotations::new(1, vec![bad]).is_err());
        assert!(FrameAnnotations::new(1, vec![row(1, 0.0, 0.0)]).is_ok());
    }

    #[test]
    fn identical_tracks_have_no_errors() {
        let gt = straight_gt(5);
        let counts = match_frames(&gt, &gt, 0.5).unwrap();
        assert_eq!(counts.false_positives, 0);
        assert_eq!(counts.false_negatives, 0);
        assert_eq!(counts.id_switches, 0);
        assert_eq!(counts.gt_total, 15);
        assert_eq!(mota(&counts).unwrap(), 1.0);
    }

    #[test]
    fn one_mid_track_id_flip_is_one_switch() {
        let gt: Vec<FrameAnnotations> =
            (1..=6).map(|f| frame(f, vec![row(1, f as f64, 0.0)])).collect();
        let pred: Vec<FrameAnnotations> = (1..=6)
            .map(|f| frame(f, vec![row(if f <= 3 { 7 } else { 8 }, f as f64, 0.0)]))
            .collect();
        let counts = match_frames(&gt, &pred, 0.5).unwrap();
        assert_eq!(counts.id_switches, 1);
        assert_eq!(counts.false_positives, 0);
        assert_eq!(counts.false_negatives, 0);
        assert!((mota(&counts).unwrap() - (1.0 - 1.0 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn rebinding_after_a_gap_still_counts_a_switch() {
        // Prediction 7 covers frames 1-2, nothing covers 3, prediction 8
        // covers 4-5: the rebind at frame 4 switches ids.
        let gt: Vec<FrameAnnotations> =
            (1..=5).map(|f| frame(f, vec![row(1, 0.0, 0.0)])).collect();
        let mut pred = vec![
            frame(1, vec![row(7, 0.0, 0.0)]),
            frame(2, vec![row(7, 0.0, 0.0)]),
            frame(4, vec![row(8, 0.0, 0.0)]),
            frame(5, vec![row(8, 0.0, 0.0)]),
        ];
        let counts = match_frames(&gt, &pred, 0.5).unwrap();
        assert_eq!(counts.id_switches, 1);
        assert_eq!(counts.false_negatives, 1);

        // Same id returning after the gap is not a switch.
        pred[2] = frame(4, vec![row(7, 0.0, 0.0)]);
        pred[3] = frame(5, vec![row(7, 0.0, 0.0)]);
        let counts = match_frames(&gt, &pred, 0.5).unwrap();
        assert_eq!(counts.id_switches, 0);
    }

    #[test]
    fn persistence_keeps_a_match_hungarian_would_move() {
        // Two gt boxes drift so that a fresh per-frame matching would
        // reassign, but the persisted matches still clear the threshold.
        let gt = vec![
            frame(1, vec![row(1, 0.0, 0.0), row(2, 12.0, 0.0)]),
            frame(2, vec![row(1, 0.0, 0.0), row(2, 12.0, 0.0)]),
        ];
        let pred = vec![
            frame(1, vec![row(7, 1.0, 0.0), row(8, 11.0, 0.0)]),
            // Frame 2: both predictions sit closer to the other gt, but
            // each persisted pair still overlaps >= 0.5.
            frame(2, vec![row(7, 4.0, 0.0), row(8, 8.0, 0.0)]),
        ];
        let counts = match_frames(&gt, &pred, 0.3).unwrap();
        assert_eq!(counts.id_switches, 0);
        let frame2 = &counts.matches[1].1;
        assert!(frame2.contains(&(1, 7)));
        assert!(frame2.contains(&(2, 8)));
    }

    #[test]
    fn per_frame_matching_agrees_with_brute_force() {
        let mut rng = ChaCha12Rng::seed_from_u64(311);
        for _ in 0..500 {
            let n = rng.random_range(1..=3usize);
            let m = rng.random_range(1..=3usize);
            let gt_rows: Vec<MotRow> = (0..n)
                .map(|i| row(i as i64 + 1, rng.random_range(0.0..30.0), rng.random_range(0.0..30.0)))
                .collect();
            let pred_rows: Vec<MotRow> = (0..m)
                .map(|j| row(j as i64 + 1, rng.random_range(0.0..30.0), rng.random_range(0.0..30.0)))
                .collect();
            let threshold = 0.1;
            let got = match_rows(&gt_rows, &pred_rows, threshold).unwrap();
            let got_total: f64 =
                got.iter().map(|&(i, j)| iou_ltwh(gt_rows[i].ltwh(), pred_rows[j].ltwh())).sum();

            // Brute force over all injective partial mappings: maximize
            // matched count, then total IoU.
            let (best_count, best_total) =
                best_partial_matching(&gt_rows, &pred_rows, threshold, 0, &mut vec![false; m]);
            assert_eq!(got.len(), best_count);
            assert!((got_total - best_total).abs() < 1e-9);
        }
    }

    fn best_partial_matching(
        gt: &[MotRow],
        pred: &[MotRow],
        threshold: f64,
        i: usize,
        used: &mut Vec<bool>,
    ) -> (usize, f64) {
        if i == gt.len() {
            return (0, 0.0);
        }
        let mut best = best_partial_matching(gt, pred, threshold, i + 1, used);
        for j in 0..pred.len() {
            if used[j] {
                continue;
            }
            let iou = iou_ltwh(gt[i].ltwh(), pred[j].ltwh());
            if iou < threshold {
                continue;
            }
            used[j] = true;
            let (c, t) = best_partial_matching(gt, pred, threshold, i + 1, used);
            used[j] = false;
            if c + 1 > best.0 || (c + 1 == best.0 && t + iou > best.1 + 1e-12) {
                best = (c + 1, t + iou);
            }
        }
        best
    }

    fn permutations(m: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..m {
            let mut next = Vec::new();
            for p in out {
                for j in 0..m {
                    if !p.contains(&j) {
                        let mut q = p.clone();
                        q.push(j);
                        next.push(q);
                    }
                }
            }
            out = next;
        }
        out
    }

    #[test]
    fn mota_matches_hand_arithmetic() {
        let counts = ClearCounts {
            false_positives: 1,
            false_negatives: 2,
            id_switches: 1,
            gt_total: 10,
            matches: vec![],
        };
        assert!((mota(&counts).unwrap() - 0.6).abs() < 1e-12);
        let empty = ClearCounts {
            false_positives: 0,
            false_negatives: 0,
            id_switches: 0,
            gt_total: 0,
            matches: vec![],
        };
        assert!(mota(&empty).is_err());
    }

    #[test]
    fn all_missed_gives_zero_mota() {
        let gt: Vec<FrameAnnotations> = (1..=5)
            .map(|f| frame(f, vec![row(1, 0.0, 0.0), row(2, 50.0, 0.0)]))
            .collect();
        let counts = match_frames(&gt, &[], 0.5).unwrap();
        assert_eq!(counts.false_negatives, 10);
        assert_eq!(mota(&counts).unwrap(), 0.0);
    }

    #[test]
    fn idf1_perfect_and_empty_cases() {
        let gt = straight_gt(5);
        let (score, idtp, idfp, idfn) = idf1(&gt, &gt, 0.5).unwrap();
        assert_eq!(score, 1.0);
        assert_eq!((idtp, idfp, idfn), (15, 0, 0));
        let (score, idtp, idfp, idfn) = idf1(&gt, &[], 0.5).unwrap();
        assert_eq!(score, 0.0);
        assert_eq!((idtp, idfp, idfn), (0, 0, 15));
    }

    #[test]
    fn idf1_partial_coverage_matches_hand_counts() {
        // Two gt tracks of length 5; track 1 predicted fully, track 2
        // covered in 3 of 5 frames.
        let gt: Vec<FrameAnnotations> = (1..=5)
            .map(|f| frame(f, vec![row(1, 0.0, 0.0), row(2, 100.0, 0.0)]))
            .collect();
        let pred: Vec<FrameAnnotations> = (1..=5)
            .map(|f| {
                let mut rows = vec![row(9, 0.0, 0.0)];
                if f <= 3 {
                    rows.push(row(8, 100.0, 0.0));
                }
                frame(f, rows)
            })
            .collect();
        let (score, idtp, idfp, idfn) = idf1(&gt, &pred, 0.5).unwrap();
        assert_eq!((idtp, idfp, idfn), (8, 0, 2));
        assert!((score - 16.0 / 18.0).abs() < 1e-12);
    }

    #[test]
    fn idf1_mapping_agrees_with_brute_force() {
        let mut rng = ChaCha12Rng::seed_from_u64(313);
        for _ in 0..60 {
            let n_gt = rng.random_range(1..=4usize);
            let n_pred = rng.random_range(1..=4usize);
            let frames = 6usize;
            let make = |n: usize, rng: &mut ChaCha12Rng| -> Vec<FrameAnnotations> {
                let lanes: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..80.0)).collect();
                (1..=frames)
                    .map(|f| {
                        let rows = (0..n)
                            .filter(|_| rng.random_range(0.0..1.0) < 0.8)
                            .map(|i| row(i as i64 + 1, lanes[i], 0.0))
                            .collect();
                        frame(f, rows)
                    })
                    .collect()
            };
            let gt = make(n_gt, &mut rng);
            let pred = make(n_pred, &mut rng);
            let (_, idtp, _, _) = idf1(&gt, &pred, 0.5).unwrap();

            // Brute force over injective gt -> pred mappings.
            let g = Trajectories::build(&gt);
            let p = Trajectories::build(&pred);
            let gids: Vec<i64> = g.tracks.keys().copied().collect();
            let pids: Vec<i64> = p.tracks.keys().copied().collect();
            let mut best = 0usize;
            for perm in permutations(pids.len()) {
                for take in 0..=gids.len().min(pids.len()) {
                    let mut total = 0usize;
                    for i in 0..take {
                        total += trajectory_overlap(
                            &g.tracks[&gids[i]],
                            &p.tracks[&pids[perm[i]]],
                            0.5,
                        );
                    }
                    best = best.max(total);
                }
            }
            // The matcher may map any subset; brute force fixes gt order,
            // so permute gt too for small cases.
            let mut best_full = best;
            for gperm in permutations(gids.len()) {
                for pperm in permutations(pids.len()) {
                    let take = gids.len().min(pids.len());
                    let mut total = 0usize;
                    for i in 0..take {
                        total += trajectory_overlap(
                            &g.tracks[&gids[gperm[i]]],
                            &p.tracks[&pids[pperm[i]]],
                            0.5,
                        );
                    }
                    best_full = best_full.max(total);
                }
            }
            assert_eq!(idtp, best_full);
        }
    }

    #[test]
    fn hota_perfect_and_empty_cases() {
        let gt = straight_gt(4);
        let report = hota(&gt, &gt).unwrap();
        assert!((report.hota - 1.0).abs() < 1e-12);
        assert!((report.deta - 1.0).abs() < 1e-12);
        assert!((report.assa - 1.0).abs() < 1e-12);
        let report = hota(&gt, &[]).unwrap();
        assert_eq!(report.hota, 0.0);
    }

    #[test]
    fn hota_split_track_is_root_half() {
        let gt: Vec<FrameAnnotations> =
            (1..=2).map(|f| frame(f, vec![row(1, 0.0, 0.0)])).collect();
        let pred = vec![
            frame(1, vec![row(7, 0.0, 0.0)]),
            frame(2, vec![row(8, 0.0, 0.0)]),
        ];
        let report = hota(&gt, &pred).unwrap();
        assert!((report.deta - 1.0).abs() < 1e-12);
        assert!((report.assa - 0.5).abs() < 1e-12);
        assert!((report.hota - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn hota_thresholds_combine_geometrically() {
        let mut rng = ChaCha12Rng::seed_from_u64(317);
        let gt = straight_gt(6);
        let pred: Vec<FrameAnnotations> = gt
            .iter()
            .map(|f| {
                let mut rows = Vec::new();
                for r in &f.rows {
                    if rng.random_range(0.0..1.0) < 0.85 {
                        let mut r = r.clone();
                        r.id += 40;
                        r.left += rng.random_range(-4.0..4.0);
                        rows.push(r);
                    }
                }
                frame(f.frame_index, rows)
            })
            .collect();
        let report = hota(&gt, &pred).unwrap();
        for (_, deta, assa, h) in &report.per_alpha {
            assert!((h - (deta * assa).sqrt()).abs() < 1e-12);
            assert!((0.0..=1.0).contains(deta));
            assert!((0.0..=1.0).contains(assa));
        }
        assert_eq!(report.per_alpha.len(), 19);
        assert!((report.per_alpha[0].0 - 0.05).abs() < 1e-12);
        assert!((report.per_alpha[18].0 - 0.95).abs() < 1e-12);
    }

    #[test]
    fn scores_ignore_prediction_id_labels() {
        let mut rng = ChaCha12Rng::seed_from_u64(331);
        let gt = straight_gt(6);
        let pred: Vec<FrameAnnotations> = gt
            .iter()
            .map(|f| {
                let mut rows = Vec::new();
                for r in &f.rows {
                    if rng.random_range(0.0..1.0) < 0.8 {
                        let mut r = r.clone();
                        r.left += rng.random_range(-3.0..3.0);
                        rows.push(r);
                    }
                }
                frame(f.frame_index, rows)
            })
            .collect();
        // Relabel prediction ids by a fixed bijection.
        let relabeled: Vec<FrameAnnotations> = pred
            .iter()
            .map(|f| {
                let rows = f
                    .rows
                    .iter()
                    .map(|r| {
                        let mut r = r.clone();
                        r.id = 1000 - 7 * r.id;
                        r
                    })
                    .collect();
                frame(f.frame_index, rows)
            })
            .collect();
        let a = evaluate(&gt, &pred, 0.5).unwrap();
        let b = evaluate(&gt, &relabeled, 0.5).unwrap();
        assert!((a.mota - b.mota).abs() < 1e-12);
        assert!((a.idf1 - b.idf1).abs() < 1e-12);
        assert!((a.hota - b.hota).abs() < 1e-12);
        assert_eq!(a.id_switches, b.id_switches);
    }

    #[test]
    fn report_serializes_with_short_count_keys() {
        let gt = straight_gt(3);
        let report = evaluate(&gt, &gt, 0.5).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"fp\":0"));
        assert!(json.contains("\"fn\":0"));
        assert!(json.contains("\"idsw\":0"));
        assert!(json.contains("\"mota\":1.0"));
    }
}
