//! MOT-Challenge CSV result files: `<frame>,<id>,<left>,<top>,<width>,
//! <height>,<conf>,<x>,<y>,<z>`. The world coordinates x/y/z are not used
//! and written as -1; parsing tolerates extra trailing fields.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{FrameAnnotations, MotRow};

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("{} is not a valid {}", s.trim(), what),
    })
}

/// Parse a result or ground-truth file into per-frame annotations sorted
/// by ascending frame index. Blank lines are permitted; any malformed
/// line fails with its 1-based line number.
pub fn parse_mot_file(path: &Path) -> Result<Vec<FrameAnnotations>> {
    let text = std::fs::read_to_string(path)?;
    parse_mot_str(&text)
}

pub fn parse_mot_str(text: &str) -> Result<Vec<FrameAnnotations>> {
    let mut frames: std::collections::BTreeMap<usize, Vec<MotRow>> = Default::default();
    let mut seen: BTreeSet<(usize, i64)> = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() < 7 {
            return Err(Error::Parse {
                line,
                message: format!("expected at least 7 comma-separated fields, got {}", fields.len()),
            });
        }
        let frame: usize = parse_field(fields[0], line, "frame index")?;
        if frame == 0 {
            return Err(Error::Parse { line, message: "frame indices are 1-based".into() });
        }
        let id: i64 = parse_field(fields[1], line, "track id")?;
        let left: f64 = parse_field(fields[2], line, "left coordinate")?;
        let top: f64 = parse_field(fields[3], line, "top coordinate")?;
        let width: f64 = parse_field(fields[4], line, "width")?;
        let height: f64 = parse_field(fields[5], line, "height")?;
        let confidence: f64 = parse_field(fields[6], line, "confidence")?;
        if !(width > 0.0) || !(height > 0.0) {
            return Err(Error::Parse {
                line,
                message: format!("non-positive box {}x{}", width, height),
            });
        }
        if [left, top, width, height, confidence].iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse { line, message: "non-finite field".into() });
        }
        if !seen.insert((frame, id)) {
            return Err(Error::Parse {
                line,
                message: format!("track id {} appears twice in frame {}", id, frame),
            });
        }
        frames.entry(frame).or_default().push(MotRow { id, left, top, width, height, confidence });
    }
    frames
        .into_iter()
        .map(|(frame_index, rows)| FrameAnnotations::new(frame_index, rows))
        .collect()
}

/// Render annotations in the same CSV schema: rows sorted by (frame, id),
/// confidence with six decimal places, world coordinates written as -1.
/// Output bytes depend only on the input values.
pub fn format_mot_results(frames: &[FrameAnnotations]) -> String {
    let mut rows: Vec<(usize, &MotRow)> = frames
        .iter()
        .flat_map(|f| f.rows.iter().map(move |r| (f.frame_index, r)))
        .collect();
    rows.sort_by(|a, b| (a.0, a.1.id).cmp(&(b.0, b.1.id)));
    let mut out = String::new();
    for (frame, r) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.6},-1,-1,-1",
            frame, r.id, r.left, r.top, r.width, r.height, r.confidence
        )
        .expect("string writes cannot fail");
    }
    out
}

pub fn write_mot_results(frames: &[FrameAnnotations], path: &Path) -> Result<()> {
    std::fs::write(path, format_mot_results(frames))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn parses_the_standard_row_shape() {
        let frames = parse_mot_str("1,1,100,200,50,150,1,-1,-1,-1\n").unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].frame_index, 1);
        let r = &frames[0].rows[0];
        assert_eq!(r.id, 1);
        assert_eq!([r.left, r.top, r.width, r.height], [100.0, 200.0, 50.0, 150.0]);
        assert_eq!(r.confidence, 1.0);
    }

    #[test]
    fn empty_input_is_an_empty_list() {
        assert!(parse_mot_str("").unwrap().is_empty());
        assert!(parse_mot_str("\n\n").unwrap().is_empty());
        assert_eq!(format_mot_results(&[]), "");
    }

    #[test]
    fn tolerates_trailing_fields_and_spaces() {
        let frames = parse_mot_str("2, 7, 1.5, 2.5, 3, 4, 0.25, -1, -1, -1, 99, extra\n").unwrap();
        assert_eq!(frames[0].frame_index, 2);
        assert_eq!(frames[0].rows[0].id, 7);
        assert_eq!(frames[0].rows[0].confidence, 0.25);
    }

    #[test]
    fn malformed_lines_carry_their_line_number() {
        let err = parse_mot_str("1,1,0,0,10,10,1\nbogus line\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected a parse error, got {other:?}"),
        }
        let err = parse_mot_str("1,1,0,0,10,10,1\n1,2,0,0,0,10,1\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("non-positive"));
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
        let err = parse_mot_str("3,5,0,0,1,1,1\n3,5,9,9,1,1,1\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn one_row_is_one_newline_terminated_line() {
        let frames =
            vec![FrameAnnotations::new(1, vec![MotRow { id: 3, left: 1.0, top: 2.0, width: 4.0, height: 5.0, confidence: 0.5 }])
                .unwrap()];
        let text = format_mot_results(&frames);
        assert_eq!(text, "1,3,1,2,4,5,0.500000,-1,-1,-1\n");
    }

    #[test]
    fn rows_are_sorted_by_frame_then_id() {
        let frames = vec![
            FrameAnnotations::new(
                2,
                vec![
                    MotRow { id: 9, left: 0.0, top: 0.0, width: 1.0, height: 1.0, confidence: 1.0 },
                    MotRow { id: 1, left: 0.0, top: 0.0, width: 1.0, height: 1.0, confidence: 1.0 },
                ],
            )
            .unwrap(),
            FrameAnnotations::new(
                1,
                vec![MotRow { id: 5, left: 0.0, top: 0.0, width: 1.0, height: 1.0, confidence: 1.0 }],
            )
            .unwrap(),
        ];
        let lines: Vec<String> =
            format_mot_results(&frames).lines().map(|l| l.to_string()).collect();
        assert!(lines[0].starts_with("1,5,"));
        assert!(lines[1].starts_with("2,1,"));
        assert!(lines[2].starts_with("2,9,"));
    }

    fn random_annotations(rng: &mut ChaCha12Rng) -> Vec<FrameAnnotations> {
        let n_frames = rng.random_range(0..6usize);
        (1..=n_frames)
            .filter_map(|f| {
                let n_rows = rng.random_range(0..4usize);
                let rows: Vec<MotRow> = (0..n_rows)
                    .map(|k| MotRow {
                        id: k as i64 * 3 + rng.random_range(1..3i64),
                        left: rng.random_range(-50.0..500.0f64),
                        top: rng.random_range(-50.0..500.0f64),
                        width: rng.random_range(0.5..80.0f64),
                        height: rng.random_range(0.5..80.0f64),
                        confidence: (rng.random_range(0.0..1.0f64) * 1e6).round() / 1e6,
                    })
                    .collect();
                FrameAnnotations::new(f, rows).ok()
            })
            .collect()
    }

    #[test]
    fn parse_of_write_recovers_the_input() {
        let mut rng = ChaCha12Rng::seed_from_u64(401);
        for _ in 0..200 {
            let mut x = random_annotations(&mut rng);
            // The writer sorts rows by id within a frame; canonicalize the
            // input the same way before comparing.
            for f in &mut x {
                f.rows.sort_by_key(|r| r.id);
            }
            let parsed = parse_mot_str(&format_mot_results(&x)).unwrap();
            let kept: Vec<&FrameAnnotations> = x.iter().filter(|f| !f.rows.is_empty()).collect();
            assert_eq!(parsed.len(), kept.len());
            for (a, b) in kept.iter().zip(&parsed) {
                assert_eq!(a.frame_index, b.frame_index);
                assert_eq!(a.rows, b.rows);
            }
        }
    }

    #[test]
    fn write_parse_write_is_byte_stable() {
        let mut rng = ChaCha12Rng::seed_from_u64(402);
        for _ in 0..200 {
            let x = random_annotations(&mut rng);
            let once = format_mot_results(&x);
            let twice = format_mot_results(&parse_mot_str(&once).unwrap());
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn file_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.txt");
        let frames = parse_mot_str("1,1,10,20,30,40,0.75,-1,-1,-1\n2,1,11,21,30,40,0.5,-1,-1,-1\n").unwrap();
        write_mot_results(&frames, &path).unwrap();
        let back = parse_mot_file(&path).unwrap();
        assert_eq!(frames, back);
    }
}
