//! Attention-based multi-object tracking with an explicit spatio-temporal
//! track memory.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`] and [`attention`]: the dense f64 kernel everything runs on.
//! - [`proposal`]: transformer encoder/decoder that turns a frame feature
//!   map into box/objectness candidates.
//! - [`pyramid`]: multi-scale feature fusion with progressive transfer
//!   layers (deformable sampling + attention masks).
//! - [`memory`]: bounded FIFO buffer of per-track states.
//! - [`aggregate`]: short/long-term memory aggregation into one tracklet
//!   embedding per live track.
//! - [`tracker`]: memory decoder, bipartite assignment, and the per-frame
//!   track lifecycle step.
//! - [`losses`], [`metrics`]: training losses with analytic gradients and
//!   CLEAR/IDF1/HOTA evaluation.
//! - [`mot`], [`synth`], [`oracle`], [`config`], [`selftest`]: file formats,
//!   synthetic scenes, the analytically tractable test configuration, run
//!   configuration, and the built-in verification suite.

pub mod aggregate;
pub mod assign;
pub mod attention;
pub mod boxes;
pub mod config;
pub mod error;
pub mod losses;
pub mod memory;
pub mod metrics;
pub mod mot;
pub mod oracle;
pub mod proposal;
pub mod pyramid;
pub mod selftest;
pub mod synth;
pub mod tensor;
pub mod tracker;

pub use error::{Error, Result};
