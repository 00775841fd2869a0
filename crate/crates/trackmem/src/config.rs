//! Run configuration files: versioned JSON with fail-fast parsing.
//! Unknown keys are rejected so a typo cannot silently fall back to a
//! default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregate::AggregationStrategy;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::oracle::RESERVED_CHANNELS;
use crate::synth::SceneConfig;
use crate::tracker::TrackerConfig;

fn d_default() -> usize {
    64
}
fn n_heads_default() -> usize {
    4
}
fn n_candidates_default() -> usize {
    50
}
fn eps_conf_default() -> f64 {
    0.5
}
fn k_miss_default() -> usize {
    30
}
fn t_short_default() -> usize {
    5
}
fn t_long_default() -> usize {
    25
}
fn t_max_default() -> usize {
    30
}
fn n_max_default() -> usize {
    350
}
fn tau_dup_default() -> f64 {
    0.7
}
fn image_width_default() -> f64 {
    640.0
}
fn image_height_default() -> f64 {
    480.0
}

/// Everything a tracking run needs beyond the per-frame inputs. Absent
/// keys take the documented defaults; unknown keys are errors.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default = "d_default")]
    pub d: usize,
    #[serde(default = "n_heads_default")]
    pub n_heads: usize,
    #[serde(default = "n_candidates_default")]
    pub n_candidates: usize,
    #[serde(default = "eps_conf_default")]
    pub eps_conf: f64,
    #[serde(default = "k_miss_default")]
    pub k_miss: usize,
    #[serde(default = "t_short_default")]
    pub t_short: usize,
    #[serde(default = "t_long_default")]
    pub t_long: usize,
    #[serde(default = "t_max_default")]
    pub t_max: usize,
    #[serde(default = "n_max_default")]
    pub n_max: usize,
    #[serde(default = "tau_dup_default")]
    pub tau_dup: f64,
    #[serde(default)]
    pub aggregation: AggregationStrategy,
    #[serde(default)]
    pub loss_weights: LossWeights,
    /// Scene description used when detections are synthetic.
    #[serde(default)]
    pub scene: Option<PathBuf>,
    /// Image size assumed for detections read from result files (the
    /// synthetic route takes its size from the scene).
    #[serde(default = "image_width_default")]
    pub image_width: f64,
    #[serde(default = "image_height_default")]
    pub image_height: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: 1,
            d: d_default(),
            n_heads: n_heads_default(),
            n_candidates: n_candidates_default(),
            eps_conf: eps_conf_default(),
            k_miss: k_miss_default(),
            t_short: t_short_default(),
            t_long: t_long_default(),
            t_max: t_max_default(),
            n_max: n_max_default(),
            tau_dup: tau_dup_default(),
            aggregation: AggregationStrategy::default(),
            loss_weights: LossWeights::default(),
            scene: None,
            image_width: image_width_default(),
            image_height: image_height_default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(Error::arg(format!(
                "unsupported run schema version {}",
                self.schema_version
            )));
        }
        if self.d <= RESERVED_CHANNELS || (self.d - RESERVED_CHANNELS) % 8 != 0 {
            return Err(Error::arg(format!(
                "model width must leave an embedding width divisible by 8 after the {} reserved channels, got {}",
                RESERVED_CHANNELS, self.d
            )));
        }
        if self.n_heads == 0 || self.d % self.n_heads != 0 {
            return Err(Error::arg(format!(
                "width {} not divisible into {} heads",
                self.d, self.n_heads
            )));
        }
        if self.n_candidates == 0 {
            return Err(Error::arg("the candidate network needs at least one query"));
        }
        if !(self.image_width >= 96.0) || !(self.image_height >= 96.0) {
            return Err(Error::arg("image must be at least 96x96 pixels"));
        }
        self.tracker_config()?;
        Ok(())
    }

    /// Cross-field window/threshold consistency lives in the tracker
    /// config constructor.
    pub fn tracker_config(&self) -> Result<TrackerConfig> {
        TrackerConfig::new(
            self.eps_conf,
            self.k_miss,
            self.t_short,
            self.t_long,
            self.t_max,
            self.n_max,
            self.tau_dup,
        )
    }

    /// Identity-subspace width: model width minus the reserved channels.
    pub fn d_emb(&self) -> usize {
        self.d - RESERVED_CHANNELS
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: RunConfig = serde_json::from_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scene_config(path: &Path) -> Result<SceneConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: SceneConfig = serde_json::from_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_all_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"schema_version": 1}"#).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.d, 64);
        assert_eq!(cfg.n_heads, 4);
        assert_eq!(cfg.n_candidates, 50);
        assert_eq!(cfg.eps_conf, 0.5);
        assert_eq!(cfg.k_miss, 30);
        assert_eq!((cfg.t_short, cfg.t_long, cfg.t_max), (5, 25, 30));
        assert_eq!(cfg.n_max, 350);
        assert_eq!(cfg.tau_dup, 0.7);
        assert_eq!(cfg.aggregation, AggregationStrategy::Ours);
        assert_eq!(cfg.loss_weights, LossWeights::default());
        assert_eq!(cfg.d_emb(), 56);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"schema_version": 1, "t_shrot": 5}"#);
        assert!(err.is_err());
        let err =
            serde_json::from_str::<SceneConfig>(r#"{"schema_version": 1, "frames": 10}"#);
        assert!(err.is_err());
    }

    #[test]
    fn schema_version_is_enforced() {
        let cfg: RunConfig = serde_json::from_str(r#"{"schema_version": 2}"#).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn window_ordering_is_cross_checked() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"schema_version": 1, "t_short": 26}"#).unwrap();
        assert!(cfg.validate().is_err());
        let cfg: RunConfig =
            serde_json::from_str(r#"{"schema_version": 1, "t_long": 31}"#).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn width_must_fit_the_reserved_channel_layout() {
        let cfg: RunConfig = serde_json::from_str(r#"{"schema_version": 1, "d": 8}"#).unwrap();
        assert!(cfg.validate().is_err());
        let cfg: RunConfig =
            serde_json::from_str(r#"{"schema_version": 1, "d": 62, "n_heads": 2}"#).unwrap();
        assert!(cfg.validate().is_err());
        let cfg: RunConfig =
            serde_json::from_str(r#"{"schema_version": 1, "d": 24, "n_heads": 4}"#).unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn files_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let mut cfg = RunConfig::default();
        cfg.aggregation = AggregationStrategy::AvgPool;
        cfg.seed = 99;
        std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        let back = load_run_config(&path).unwrap();
        assert_eq!(back.aggregation, AggregationStrategy::AvgPool);
        assert_eq!(back.seed, 99);

        let scene_path = dir.path().join("scene.json");
        let scene = crate::synth::SceneConfig {
            schema_version: 1,
            n_objects: 3,
            frame_count: 10,
            image_width: 640.0,
            image_height: 480.0,
            min_speed: 1.0,
            max_speed: 3.0,
            occlusions: vec![],
            box_jitter_px: 0.0,
            embedding_noise_std: 0.0,
            drop_probability: 0.0,
            seed: 5,
        };
        std::fs::write(&scene_path, serde_json::to_string_pretty(&scene).unwrap()).unwrap();
        assert_eq!(load_scene_config(&scene_path).unwrap(), scene);
    }
}
