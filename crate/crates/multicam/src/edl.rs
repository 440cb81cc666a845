//! Edit decision lists and the autoregressive editing sweep.
//!
//! Inference differs from training: the history window holds the model's
//! *own* previous selections, not ground truth. Exposure bias is accepted;
//! unedited footage has no ground truth to lean on.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{shots_from_annotation, DataError, EditAnnotation, FeaturePool, Shot};
use crate::model::{score_group, ModelError, ModelParams, StreamMode};
use crate::numerics::Tensor;

#[derive(Debug, Error)]
pub enum EdlError {
    #[error("pool feature width {pool} does not match the checkpoint's d_in {model}")]
    DimMismatch { pool: usize, model: usize },
    #[error("decision stride must be ≥ 1")]
    BadStride,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("EDL invalid at frame {frame}: {reason}")]
    Invalid { frame: usize, reason: String },
}

/// The edited show: ordered shots that abut, cover the pool, and change
/// track at every boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditDecisionList {
    pub fps: f64,
    /// Identifier of the pool this list cuts (typically the file path).
    pub source: String,
    pub shots: Vec<Shot>,
}

impl EditDecisionList {
    pub fn frames(&self) -> usize {
        self.shots.last().map(|s| s.end).unwrap_or(0)
    }

    /// Check the structural invariants against an expected frame count.
    pub fn validate(&self, frames: usize) -> Result<(), EdlError> {
        if self.shots.is_empty() {
            return Err(EdlError::Invalid {
                frame: 0,
                reason: "no shots".into(),
            });
        }
        if self.shots[0].start != 0 {
            return Err(EdlError::Invalid {
                frame: self.shots[0].start,
                reason: "first shot must start at frame 0".into(),
            });
        }
        for w in self.shots.windows(2) {
            if w[1].start != w[0].end {
                return Err(EdlError::Invalid {
                    frame: w[0].end,
                    reason: "shots must abut".into(),
                });
            }
            if w[1].track == w[0].track {
                return Err(EdlError::Invalid {
                    frame: w[1].start,
                    reason: "adjacent shots must change track".into(),
                });
            }
        }
        for s in &self.shots {
            if s.start >= s.end {
                return Err(EdlError::Invalid {
                    frame: s.start,
                    reason: "empty shot".into(),
                });
            }
        }
        if self.frames() != frames {
            return Err(EdlError::Invalid {
                frame: self.frames(),
                reason: format!("covers {} frames, expected {frames}", self.frames()),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EditOptions {
    /// Score candidates every this many frames; selections only change at
    /// decision frames.
    pub decision_stride: usize,
    /// Suppress switches until the incumbent shot reaches this length
    /// (0 = off). The final shot may still run short at the pool end.
    pub min_shot_frames: usize,
}

impl Default for EditOptions {
    fn default() -> Self {
        EditOptions {
            decision_stride: 1,
            min_shot_frames: 0,
        }
    }
}

/// History window of the model's own selections ending just before `end`.
fn own_history(
    pool: &FeaturePool,
    selections: &[u16],
    end: usize,
    w: usize,
) -> Tensor<f32> {
    let d = pool.dim();
    let mut data = vec![0.0f32; w * d];
    for (offset, t) in (end.saturating_sub(w)..end).enumerate() {
        let row = offset + w - end.min(w);
        data[row * d..(row + 1) * d]
            .copy_from_slice(pool.frame(t, usize::from(selections[t])));
    }
    Tensor::new(vec![w, d], data).expect("history shape")
}

fn context_at(pool: &FeaturePool, frame: usize) -> Tensor<f32> {
    let (tracks, d) = (pool.tracks(), pool.dim());
    let mut data = Vec::with_capacity(tracks * d);
    for j in 0..tracks {
        data.extend_from_slice(pool.frame(frame, j));
    }
    Tensor::new(vec![tracks, d], data).expect("context shape")
}

fn argmax_lowest(scores: &[f32]) -> usize {
    let mut best = 0usize;
    for (j, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = j;
        }
    }
    best
}

/// Autoregressive sweep over a pool: at each decision frame, score all
/// tracks against the model's own history and keep or cut by argmax
/// (ties to the lowest index).
pub fn autoregressive_edit(
    params: &ModelParams<f32>,
    pool: &FeaturePool,
    source: &str,
    options: &EditOptions,
) -> Result<EditDecisionList, EdlError> {
    if options.decision_stride == 0 {
        return Err(EdlError::BadStride);
    }
    if pool.dim() != params.config.d_in {
        return Err(EdlError::DimMismatch {
            pool: pool.dim(),
            model: params.config.d_in,
        });
    }

    let w = params.config.w;
    let mut selections: Vec<u16> = Vec::with_capacity(pool.frames());
    let mut shot_start = 0usize;

    for i in 0..pool.frames() {
        let decide = i % options.decision_stride == 0;
        let choice = if !decide && i > 0 {
            usize::from(selections[i - 1])
        } else {
            let incumbent = if i > 0 {
                Some(usize::from(selections[i - 1]))
            } else {
                None
            };
            let holding = match incumbent {
                Some(_) if options.min_shot_frames > 0 => {
                    i - shot_start < options.min_shot_frames
                }
                _ => false,
            };
            if holding {
                incumbent.expect("holding implies an incumbent")
            } else {
                let history = own_history(pool, &selections, i, w);
                let context = context_at(pool, i);
                let scores = score_group(params, &history, &context, StreamMode::Full)?;
                argmax_lowest(&scores)
            }
        };
        if Some(choice) != selections.last().map(|&t| usize::from(t)) {
            shot_start = i;
        }
        selections.push(choice as u16);
    }

    let ann = EditAnnotation::new(selections, pool.tracks())
        .map_err(EdlError::Data)?;
    let shots = shots_from_annotation(&ann)?;
    let edl = EditDecisionList {
        fps: pool.fps(),
        source: source.to_string(),
        shots,
    };
    edl.validate(pool.frames())?;
    Ok(edl)
}

pub fn save_edl(path: impl AsRef<Path>, edl: &EditDecisionList) -> Result<(), EdlError> {
    let w = BufWriter::new(File::create(path).map_err(DataError::Io)?);
    serde_json::to_writer_pretty(w, edl)
        .map_err(|e| DataError::Header(e.to_string()))?;
    Ok(())
}

pub fn load_edl(path: impl AsRef<Path>) -> Result<EditDecisionList, EdlError> {
    let r = BufReader::new(File::open(path).map_err(DataError::Io)?);
    let edl: EditDecisionList =
        serde_json::from_reader(r).map_err(|e| DataError::Header(e.to_string()))?;
    Ok(edl)
}

/// Frame-level agreement between an EDL and a reference annotation.
pub fn agreement(edl: &EditDecisionList, ann: &EditAnnotation) -> f64 {
    let mut same = 0usize;
    let mut total = 0usize;
    for shot in &edl.shots {
        for frame in shot.start..shot.end.min(ann.len()) {
            if ann.track(frame) == shot.track {
                same += 1;
            }
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        same as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_show, SyntheticSpec};
    use crate::model::{init_params, ModelConfig};

    fn tiny_setup(seed: u64) -> (ModelParams<f32>, FeaturePool) {
        let cfg = ModelConfig {
            d_in: 4,
            d_model: 8,
            n_heads: 2,
            n_layers_t: 1,
            n_layers_c: 1,
            w: 4,
            d_ff: 16,
            d_fuse: 8,
            seed,
            ..ModelConfig::default()
        };
        let params = init_params(&cfg).unwrap();
        let (pool, _) = generate_synthetic_show(&SyntheticSpec {
            tracks: 3,
            dim: 4,
            duration_frames: 96,
            seed,
            ..SyntheticSpec::default()
        })
        .unwrap();
        (params, pool)
    }

    #[test]
    fn zero_fusion_model_emits_a_single_track_zero_shot() {
        let (mut params, pool) = tiny_setup(1);
        params.zero_fusion();
        let edl =
            autoregressive_edit(&params, &pool, "pool-1", &EditOptions::default()).unwrap();
        assert_eq!(
            edl.shots,
            vec![Shot { start: 0, end: pool.frames(), track: 0 }]
        );
    }

    #[test]
    fn edl_invariants_hold_for_random_params() {
        let (params, pool) = tiny_setup(7);
        let edl =
            autoregressive_edit(&params, &pool, "pool-7", &EditOptions::default()).unwrap();
        edl.validate(pool.frames()).unwrap();
    }

    #[test]
    fn min_shot_frames_suppresses_early_switches() {
        let (params, pool) = tiny_setup(3);
        let opts = EditOptions {
            decision_stride: 1,
            min_shot_frames: 24,
        };
        let edl = autoregressive_edit(&params, &pool, "pool-3", &opts).unwrap();
        for (idx, shot) in edl.shots.iter().enumerate() {
            if idx + 1 < edl.shots.len() {
                assert!(shot.frames() >= 24, "interior shot of {} frames", shot.frames());
            }
        }
    }

    #[test]
    fn stride_changes_selections_only_at_multiples() {
        let (params, pool) = tiny_setup(5);
        let opts = EditOptions {
            decision_stride: 8,
            min_shot_frames: 0,
        };
        let edl = autoregressive_edit(&params, &pool, "pool-5", &opts).unwrap();
        for shot in &edl.shots[1..] {
            assert_eq!(shot.start % 8, 0, "switch at frame {}", shot.start);
        }
    }

    #[test]
    fn dim_mismatch_is_rejected() {
        let (params, _) = tiny_setup(2);
        let (pool, _) = generate_synthetic_show(&SyntheticSpec {
            tracks: 3,
            dim: 6,
            duration_frames: 60,
            seed: 2,
            ..SyntheticSpec::default()
        })
        .unwrap();
        assert!(matches!(
            autoregressive_edit(&params, &pool, "x", &EditOptions::default()),
            Err(EdlError::DimMismatch { pool: 6, model: 4 })
        ));
    }

    #[test]
    fn edl_json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.edl.json");
        let (params, pool) = tiny_setup(9);
        let edl = autoregressive_edit(&params, &pool, "pool-9", &EditOptions::default()).unwrap();
        save_edl(&path, &edl).unwrap();
        assert_eq!(load_edl(&path).unwrap(), edl);
    }

    #[test]
    fn validate_rejects_gaps_and_repeats() {
        let edl = EditDecisionList {
            fps: 24.0,
            source: "x".into(),
            shots: vec![
                Shot { start: 0, end: 10, track: 0 },
                Shot { start: 12, end: 20, track: 1 },
            ],
        };
        assert!(edl.validate(20).is_err());
        let edl = EditDecisionList {
            fps: 24.0,
            source: "x".into(),
            shots: vec![
                Shot { start: 0, end: 10, track: 1 },
                Shot { start: 10, end: 20, track: 1 },
            ],
        };
        assert!(edl.validate(20).is_err());
    }
}
