//! Multi-camera editing toolkit.
//!
//! Given `J` synchronized per-frame feature tracks, this crate scores every
//! (frame, track) candidate with a pair of transformer encoders — one over
//! the history of previously selected frames, one over the concurrent
//! candidates — fused into a single selection probability. Around that core
//! it provides boundary-centric training, precision/AP evaluation, a seeded
//! synthetic benchmark generator, and an autoregressive sweep that emits an
//! edit decision list for a full show.
//!
//! Start with the runnable programs under `examples/`; the `multicam`
//! binary exposes the same pipeline as `gen`, `train`, `eval`, `edit`
//! and `gradcheck` subcommands.

pub mod commands;
pub mod config;
pub mod data;
pub mod edl;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod training;
