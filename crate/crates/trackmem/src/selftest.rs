//! Built-in diagnostic suite behind the `selftest` command: analytic loss
//! gradients against central finite differences, assignment against brute
//! force, metric arithmetic against hand-derived values, file round-trips,
//! and the constructed binding configuration. Each check reports pass or
//! fail with a measured detail string; nothing panics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::assign::{brute_force_assignment, hungarian};
use crate::boxes::BoxCwh;
use crate::error::Result;
use crate::losses::{focal_loss, giou_loss, l1_box_loss};
use crate::metrics::{hota, idf1, mota, ClearCounts, FrameAnnotations, MotRow};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize)]
pub struct SelfCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelftestReport {
    pub passed: bool,
    pub checks: Vec<SelfCheck>,
}

fn check(name: &str, result: Result<(bool, String)>) -> SelfCheck {
    match result {
        Ok((passed, detail)) => SelfCheck { name: name.to_string(), passed, detail },
        Err(e) => SelfCheck { name: name.to_string(), passed: false, detail: format!("error: {e}") },
    }
}

pub fn run_selftest() -> SelftestReport {
    let checks = vec![
        check("focal_gradient_vs_finite_differences", focal_gradient()),
        check("l1_box_gradient_vs_finite_differences", l1_gradient()),
        check("giou_gradient_vs_finite_differences", giou_gradient()),
        check("giou_hand_worked_pair", giou_worked_pair()),
        check("assignment_vs_brute_force", assignment_check()),
        check("clear_accuracy_hand_arithmetic", clear_arithmetic()),
        check("identity_score_hand_arithmetic", identity_arithmetic()),
        check("split_track_association", split_track()),
        check("result_file_round_trip", file_round_trip()),
        check("binding_configuration_readout", binding_readout()),
    ];
    SelftestReport { passed: checks.iter().all(|c| c.passed), checks }
}

fn focal_gradient() -> Result<(bool, String)> {
    let h = 1e-6;
    let mut worst = 0.0f64;
    for y in [0.0, 1.0] {
        for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let (_, grad) = focal_loss(p, y, 0.25, 2.0)?;
            let (above, _) = focal_loss(p + h, y, 0.25, 2.0)?;
            let (below, _) = focal_loss(p - h, y, 0.25, 2.0)?;
            let numeric = (above - below) / (2.0 * h);
            worst = worst.max((grad - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    Ok((worst < 1e-6, format!("max relative error {worst:.3e}")))
}

fn perturbed(b: &BoxCwh, k: usize, h: f64) -> BoxCwh {
    let mut v = [b.cx, b.cy, b.w, b.h];
    v[k] += h;
    BoxCwh::new(v[0], v[1], v[2], v[3])
}

fn l1_gradient() -> Result<(bool, String)> {
    let mut rng = ChaCha12Rng::seed_from_u64(71);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let pred = BoxCwh::new(
            rng.random_range(0.2..0.8),
            rng.random_range(0.2..0.8),
            rng.random_range(0.1..0.3),
            rng.random_range(0.1..0.3),
        );
        let gt = BoxCwh::new(
            rng.random_range(0.2..0.8),
            rng.random_range(0.2..0.8),
            rng.random_range(0.1..0.3),
            rng.random_range(0.1..0.3),
        );
        // The gradient has a kink wherever a coordinate pair ties.
        let coords = [
            (pred.cx, gt.cx),
            (pred.cy, gt.cy),
            (pred.w, gt.w),
            (pred.h, gt.h),
        ];
        if coords.iter().any(|(a, b)| (a - b).abs() < 1e-3) {
            continue;
        }
        let (_, grad) = l1_box_loss(&pred, &gt);
        for k in 0..4 {
            let (above, _) = l1_box_loss(&perturbed(&pred, k, h), &gt);
            let (below, _) = l1_box_loss(&perturbed(&pred, k, -h), &gt);
            let numeric = (above - below) / (2.0 * h);
            worst = worst.max((grad[k] - numeric).abs());
        }
    }
    Ok((worst < 1e-6, format!("max absolute error {worst:.3e}")))
}

fn giou_gradient() -> Result<(bool, String)> {
    let mut rng = ChaCha12Rng::seed_from_u64(73);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let pred = BoxCwh::new(
            rng.random_range(0.25..0.75),
            rng.random_range(0.25..0.75),
            rng.random_range(0.1..0.3),
            rng.random_range(0.1..0.3),
        );
        let gt = BoxCwh::new(
            rng.random_range(0.25..0.75),
            rng.random_range(0.25..0.75),
            rng.random_range(0.1..0.3),
            rng.random_range(0.1..0.3),
        );
        // Skip configurations near the piecewise boundaries (edge ties).
        let (pl, pt, pr, pb) = pred.corners();
        let (gl, gt_, gr, gb) = gt.corners();
        let ties = [(pl, gl), (pt, gt_), (pr, gr), (pb, gb), (pl, gr), (pr, gl), (pt, gb), (pb, gt_)];
        if ties.iter().any(|(a, b)| (a - b).abs() < 1e-3) {
            continue;
        }
        let (_, grad) = giou_loss(&pred, &gt)?;
        for k in 0..4 {
            let (above, _) = giou_loss(&perturbed(&pred, k, h), &gt)?;
            let (below, _) = giou_loss(&perturbed(&pred, k, -h), &gt)?;
            let numeric = (above - below) / (2.0 * h);
            worst = worst.max((grad[k] - numeric).abs());
        }
    }
    Ok((worst < 1e-5, format!("max absolute error {worst:.3e}")))
}

fn giou_worked_pair() -> Result<(bool, String)> {
    let a = BoxCwh::new(1.0, 1.0, 2.0, 2.0);
    let b = BoxCwh::new(2.0, 2.0, 2.0, 2.0);
    let (v, _) = giou_loss(&a, &b)?;
    let want = 1.0 + 5.0 / 63.0;
    Ok(((v - want).abs() < 1e-12, format!("value {v:.12} expected {want:.12}")))
}

fn assignment_check() -> Result<(bool, String)> {
    let mut rng = ChaCha12Rng::seed_from_u64(79);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=5usize);
        let m = rng.random_range(1..=5usize);
        let cost = Tensor::new(
            vec![n, m],
            (0..n * m).map(|_| rng.random_range(-4.0..4.0)).collect(),
        )?;
        let fast = hungarian(&cost)?;
        let slow = brute_force_assignment(&cost)?;
        worst = worst.max((fast.total_cost - slow).abs());
    }
    Ok((worst < 1e-9, format!("max total-cost gap {worst:.3e} over 200 instances")))
}

fn clear_arithmetic() -> Result<(bool, String)> {
    let counts = ClearCounts {
        false_positives: 1,
        false_negatives: 2,
        id_switches: 1,
        gt_total: 10,
        matches: vec![],
    };
    let v = mota(&counts)?;
    Ok(((v - 0.6).abs() < 1e-15, format!("value {v} expected 0.6")))
}

fn straight_frames(covered: usize) -> (Vec<FrameAnnotations>, Vec<FrameAnnotations>) {
    let row = |id: i64, x: f64| MotRow {
        id,
        left: x,
        top: 0.0,
        width: 10.0,
        height: 10.0,
        confidence: 1.0,
    };
    let gt: Vec<FrameAnnotations> = (1..=5)
        .map(|f| {
            FrameAnnotations::new(f, vec![row(1, 0.0), row(2, 100.0)]).expect("valid rows")
        })
        .collect();
    let pred: Vec<FrameAnnotations> = (1..=5)
        .map(|f| {
            let mut rows = vec![row(9, 0.0)];
            if f <= covered {
                rows.push(row(8, 100.0));
            }
            FrameAnnotations::new(f, rows).expect("valid rows")
        })
        .collect();
    (gt, pred)
}

fn identity_arithmetic() -> Result<(bool, String)> {
    let (gt, pred) = straight_frames(3);
    let (score, idtp, idfp, idfn) = idf1(&gt, &pred, 0.5)?;
    let want = 16.0 / 18.0;
    let counts_ok = (idtp, idfp, idfn) == (8, 0, 2);
    Ok((
        counts_ok && (score - want).abs() < 1e-12,
        format!("score {score:.12} expected {want:.12}, IDTP/IDFP/IDFN {idtp}/{idfp}/{idfn}"),
    ))
}

fn split_track() -> Result<(bool, String)> {
    let row = |id: i64| MotRow { id, left: 0.0, top: 0.0, width: 10.0, height: 10.0, confidence: 1.0 };
    let gt = vec![
        FrameAnnotations::new(1, vec![row(1)])?,
        FrameAnnotations::new(2, vec![row(1)])?,
    ];
    let pred = vec![
        FrameAnnotations::new(1, vec![row(7)])?,
        FrameAnnotations::new(2, vec![row(8)])?,
    ];
    let report = hota(&gt, &pred)?;
    let want = 0.5f64.sqrt();
    Ok((
        (report.hota - want).abs() < 1e-9,
        format!("value {:.12} expected {:.12}", report.hota, want),
    ))
}

fn file_round_trip() -> Result<(bool, String)> {
    let mut rng = ChaCha12Rng::seed_from_u64(83);
    for trial in 0..50 {
        let frames: Vec<FrameAnnotations> = (1..=rng.random_range(1..5usize))
            .map(|f| {
                let rows: Vec<MotRow> = (0..rng.random_range(0..4usize))
                    .map(|k| MotRow {
                        id: k as i64 + 1,
                        left: rng.random_range(0.0..500.0),
                        top: rng.random_range(0.0..500.0),
                        width: rng.random_range(1.0..80.0),
                        height: rng.random_range(1.0..80.0),
                        confidence: (rng.random_range(0.0..1.0f64) * 1e6).round() / 1e6,
                    })
                    .collect();
                FrameAnnotations::new(f, rows)
            })
            .collect::<Result<_>>()?;
        let once = crate::mot::format_mot_results(&frames);
        let twice = crate::mot::format_mot_results(&crate::mot::parse_mot_str(&once)?);
        if once != twice {
            return Ok((false, format!("byte mismatch on trial {trial}")));
        }
    }
    Ok((true, "50 random annotation sets byte-stable".to_string()))
}

fn binding_readout() -> Result<(bool, String)> {
    let d_emb = 8;
    let decoder = crate::oracle::identity_decoder(d_emb)?;
    let mut e = vec![0.0; d_emb];
    e[2] = 1.0;
    let e = Tensor::new(vec![d_emb], e)?;
    let want = BoxCwh::new(0.3, 0.6, 0.12, 0.2);
    let f1 = crate::oracle::encode_oracle_frame(&[(want, e.clone())])?;
    let q = crate::oracle::extend_embedding(&e, d_emb + crate::oracle::RESERVED_CHANNELS)?;
    let cand = crate::proposal::Proposal::new(q, BoxCwh::new(0.5, 0.5, 0.5, 0.5), 1.0)?;
    let out = crate::tracker::decode(
        &f1,
        &[cand],
        &Tensor::new(vec![0, d_emb + crate::oracle::RESERVED_CHANNELS], vec![])?,
        &[],
        &decoder,
    )?;
    let b = out[0].bbox;
    let err = (b.cx - want.cx)
        .abs()
        .max((b.cy - want.cy).abs())
        .max((b.w - want.w).abs())
        .max((b.h - want.h).abs());
    Ok((
        err < 2e-3 && out[0].objectness > 0.95,
        format!("box error {err:.2e}, objectness {:.4}", out[0].objectness),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_check_passes() {
        let report = run_selftest();
        for c in &report.checks {
            assert!(c.passed, "{} failed: {}", c.name, c.detail);
        }
        assert!(report.passed);
        assert_eq!(report.checks.len(), 10);
    }

    #[test]
    fn report_serializes_to_json() {
        let report = run_selftest();
        let json = serde_json::to_string_pretty(&report).unwrap();
        assert!(json.contains("\"passed\": true"));
        assert!(json.contains("binding_configuration_readout"));
    }
}
