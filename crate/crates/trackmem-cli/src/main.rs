//! Command line front end: synthetic ground truth generation, tracking
//! over oracle or file detections, metric evaluation, and the built-in
//! diagnostic suite. Exit codes: 0 success, 1 runtime failure, 2 usage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use trackmem::boxes::BoxCwh;
use trackmem::config::{load_run_config, load_scene_config, RunConfig};
use trackmem::metrics::{evaluate, FrameAnnotations, MetricReport, MotRow};
use trackmem::mot::{parse_mot_file, write_mot_results};
use trackmem::oracle;
use trackmem::proposal::Proposal;
use trackmem::synth::{clamped_normalized, generate_scene, oracle_detections, to_pixels};
use trackmem::tensor::Tensor;
use trackmem::tracker::{step, FrameInput, TrackerState};

#[derive(Parser)]
#[command(name = "trackmem", version, about = "Memory-augmented multi-object tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tracker over a detection source and write a result file.
    Track {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// A MOT detection file, or the literal word `synthetic` to draw
        /// oracle detections from the scene named in the run configuration.
        #[arg(long)]
        detections: String,
        /// Result file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the ground truth file of a synthetic scene.
    Synth {
        /// Scene configuration (JSON).
        #[arg(long)]
        scene: PathBuf,
        /// Ground truth file to write.
        #[arg(long)]
        out_gt: PathBuf,
    },
    /// Score a result file against ground truth; prints a JSON report.
    Eval {
        /// Ground truth file.
        #[arg(long)]
        gt: PathBuf,
        /// Result file to score.
        #[arg(long)]
        pred: PathBuf,
        /// IoU threshold for a prediction to count as matching.
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        /// Also write a one-row CSV summary to this path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the built-in diagnostic suite; prints a JSON report.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Track { config, detections, out } => {
            track(&config, &detections, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { scene, out_gt } => {
            synth(&scene, &out_gt)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { gt, pred, iou, csv } => {
            eval(&gt, &pred, iou, csv.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let report = trackmem::selftest::run_selftest();
            print_stdout(&serde_json::to_string_pretty(&report)?)?;
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

/// One frame ready for the tracker: original frame number, encoded frame
/// content, and width-extended proposals.
struct PreparedFrame {
    number: usize,
    f1: Tensor,
    proposals: Vec<Proposal>,
}

fn track(config: &Path, detections: &str, out: &Path) -> Result<()> {
    let cfg = load_run_config(config)
        .with_context(|| format!("loading run config {}", config.display()))?;
    let (frames, image_w, image_h) = if detections == "synthetic" {
        synthetic_frames(&cfg)?
    } else {
        file_frames(&cfg, Path::new(detections))?
    };
    let tracker_cfg = cfg.tracker_config()?;
    let mut params = oracle::identity_pipeline(cfg.d_emb(), cfg.t_short, cfg.t_long)?;
    params.strategy = cfg.aggregation;
    let mut state = TrackerState::new(&tracker_cfg)?;
    let mut results = Vec::new();
    for frame in frames {
        let rows = step(
            FrameInput::Proposals { f1: frame.f1, proposals: frame.proposals },
            &mut state,
            &tracker_cfg,
            &params,
        )?;
        let mot_rows: Vec<MotRow> = rows
            .into_iter()
            .map(|r| {
                let ltwh = to_pixels(&r.bbox, image_w, image_h);
                MotRow {
                    id: r.id,
                    left: ltwh[0],
                    top: ltwh[1],
                    width: ltwh[2],
                    height: ltwh[3],
                    confidence: r.confidence,
                }
            })
            .collect();
        if !mot_rows.is_empty() {
            results.push(FrameAnnotations::new(frame.number, mot_rows)?);
        }
    }
    write_mot_results(&results, out)
        .with_context(|| format!("writing results to {}", out.display()))?;
    Ok(())
}

/// Regenerate the configured scene and turn its oracle detections into
/// tracker input. Frame content is encoded from the detections themselves,
/// so nothing the tracker sees depends on the ground truth directly.
fn synthetic_frames(cfg: &RunConfig) -> Result<(Vec<PreparedFrame>, f64, f64)> {
    let scene_path = cfg
        .scene
        .as_ref()
        .context("run config names no scene; `--detections synthetic` requires one")?;
    let scene = load_scene_config(scene_path)
        .with_context(|| format!("loading scene config {}", scene_path.display()))?;
    let d_emb = cfg.d_emb();
    let (gt, embeddings) = generate_scene(&scene, d_emb)?;
    let detections = oracle_detections(&gt, &embeddings, &scene)?;
    let mut frames = Vec::with_capacity(detections.len());
    for (annotations, proposals) in gt.iter().zip(detections) {
        frames.push(PreparedFrame {
            number: annotations.frame_index,
            f1: frame_content(&proposals, d_emb)?,
            proposals: oracle::extend_proposals(&proposals, cfg.d)?,
        });
    }
    Ok((frames, scene.image_width, scene.image_height))
}

/// Detection files carry no appearance, so each box gets a deterministic
/// positional embedding and association falls back to spatial continuity.
fn file_frames(cfg: &RunConfig, path: &Path) -> Result<(Vec<PreparedFrame>, f64, f64)> {
    let parsed = parse_mot_file(path)
        .with_context(|| format!("loading detections {}", path.display()))?;
    let d_emb = cfg.d_emb();
    let by_index: BTreeMap<usize, &FrameAnnotations> =
        parsed.iter().map(|f| (f.frame_index, f)).collect();
    let mut frames = Vec::new();
    if let (Some(&lo), Some(&hi)) = (by_index.keys().next(), by_index.keys().last()) {
        for number in lo..=hi {
            let mut proposals = Vec::new();
            if let Some(f) = by_index.get(&number) {
                for row in &f.rows {
                    let bbox = clamped_normalized(row.ltwh(), cfg.image_width, cfg.image_height);
                    let embedding = oracle::box_embedding(&bbox, d_emb)?;
                    proposals.push(Proposal::new(embedding, bbox, row.confidence.clamp(0.0, 1.0))?);
                }
            }
            frames.push(PreparedFrame {
                number,
                f1: frame_content(&proposals, d_emb)?,
                proposals: oracle::extend_proposals(&proposals, cfg.d)?,
            });
        }
    }
    Ok((frames, cfg.image_width, cfg.image_height))
}

fn frame_content(proposals: &[Proposal], d_emb: usize) -> Result<Tensor> {
    if proposals.is_empty() {
        return Ok(oracle::encode_empty_oracle_frame(d_emb));
    }
    let visible: Vec<(BoxCwh, Tensor)> =
        proposals.iter().map(|p| (p.bbox, p.embedding.clone())).collect();
    Ok(oracle::encode_oracle_frame(&visible)?)
}

fn synth(scene: &Path, out_gt: &Path) -> Result<()> {
    let cfg = load_scene_config(scene)
        .with_context(|| format!("loading scene config {}", scene.display()))?;
    // The ground truth is invariant to the embedding width, so the
    // narrowest valid basis serves.
    let (gt, _) = generate_scene(&cfg, cfg.n_objects)?;
    write_mot_results(&gt, out_gt)
        .with_context(|| format!("writing ground truth to {}", out_gt.display()))?;
    Ok(())
}

fn eval(gt_path: &Path, pred_path: &Path, iou: f64, csv: Option<&Path>) -> Result<()> {
    let gt = parse_mot_file(gt_path)
        .with_context(|| format!("loading ground truth {}", gt_path.display()))?;
    let pred = parse_mot_file(pred_path)
        .with_context(|| format!("loading predictions {}", pred_path.display()))?;
    if let (Some(first), Some(last)) = (gt.first(), gt.last()) {
        let (lo, hi) = (first.frame_index, last.frame_index);
        if let Some(bad) = pred
            .iter()
            .map(|f| f.frame_index)
            .find(|n| *n < lo || *n > hi)
        {
            anyhow::bail!("prediction frame {bad} lies outside the ground truth range {lo}..={hi}");
        }
    }
    let report = evaluate(&gt, &pred, iou)?;
    print_stdout(&serde_json::to_string_pretty(&report)?)?;
    if let Some(path) = csv {
        std::fs::write(path, csv_summary(&report))
            .with_context(|| format!("writing CSV summary to {}", path.display()))?;
    }
    Ok(())
}

/// Print a line to stdout, treating a closed pipe as a normal exit
/// condition rather than an error.
fn print_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn csv_summary(r: &MetricReport) -> String {
    format!(
        "mota,idf1,hota,deta,assa,fp,fn,idsw,idtp,idfp,idfn\n{},{},{},{},{},{},{},{},{},{},{}\n",
        r.mota,
        r.idf1,
        r.hota,
        r.deta,
        r.assa,
        r.false_positives,
        r.false_negatives,
        r.id_switches,
        r.idtp,
        r.idfp,
        r.idfn
    )
}
