//! The video-pool data model: per-frame feature tracks, ground-truth
//! annotations and their run-length shot form, scene splitting, file
//! persistence, and a procedural synthetic show generator.

mod files;
mod shots;
mod split;
mod synth;

pub use files::{
    load_annotation, load_pool, load_shots, save_annotation, save_pool, save_shots,
    ANNOTATION_MAGIC, POOL_MAGIC,
};
pub use shots::{annotation_from_shots, shots_from_annotation};
pub use split::split_scenes;
pub use synth::{generate_corpus, generate_synthetic_show, SyntheticSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected}, found {found:?}")]
    BadMagic { expected: &'static str, found: Vec<u8> },
    #[error("truncated file: expected {expected} more bytes")]
    Truncated { expected: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingData(usize),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("{0}")]
    Invalid(String),
    #[error("annotation is empty")]
    EmptyAnnotation,
    #[error("shot list invalid at boundary {frame}: {reason}")]
    BadShot { frame: usize, reason: String },
    #[error("need at least 2 scenes to split, got {0}")]
    TooFewScenes(usize),
}

/// The I×J×d pool of synchronized per-frame feature vectors: frame `i` of
/// track `j` is a length-`dim` slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePool {
    frames: usize,
    tracks: usize,
    dim: usize,
    fps: f64,
    features: Vec<f32>,
}

impl FeaturePool {
    pub fn new(
        frames: usize,
        tracks: usize,
        dim: usize,
        fps: f64,
        features: Vec<f32>,
    ) -> Result<Self, DataError> {
        if frames == 0 || tracks == 0 || dim == 0 {
            return Err(DataError::Invalid(format!(
                "pool dimensions must be ≥ 1, got {frames}×{tracks}×{dim}"
            )));
        }
        if !(fps > 0.0) {
            return Err(DataError::Invalid(format!("fps must be > 0, got {fps}")));
        }
        let expected = frames * tracks * dim;
        if features.len() != expected {
            return Err(DataError::Invalid(format!(
                "pool {frames}×{tracks}×{dim} needs {expected} values, got {}",
                features.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Invalid("pool contains non-finite values".into()));
        }
        Ok(FeaturePool {
            frames,
            tracks,
            dim,
            fps,
            features,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn tracks(&self) -> usize {
        self.tracks
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    /// Feature vector of frame `i`, track `j`.
    pub fn frame(&self, i: usize, j: usize) -> &[f32] {
        let base = (i * self.tracks + j) * self.dim;
        &self.features[base..base + self.dim]
    }
}

/// Ground truth: the selected track per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EditAnnotation {
    selected: Vec<u16>,
    tracks: usize,
}

impl EditAnnotation {
    pub fn new(selected: Vec<u16>, tracks: usize) -> Result<Self, DataError> {
        if tracks == 0 || tracks > usize::from(u16::MAX) {
            return Err(DataError::Invalid(format!(
                "track count must be in [1, {}], got {tracks}",
                u16::MAX
            )));
        }
        if let Some(&bad) = selected.iter().find(|&&t| usize::from(t) >= tracks) {
            return Err(DataError::Invalid(format!(
                "annotation entry {bad} out of range for {tracks} tracks"
            )));
        }
        Ok(EditAnnotation { selected, tracks })
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn tracks(&self) -> usize {
        self.tracks
    }

    pub fn track(&self, frame: usize) -> usize {
        usize::from(self.selected[frame])
    }

    pub fn selected(&self) -> &[u16] {
        &self.selected
    }

    /// Check this annotation covers `pool` exactly.
    pub fn matches_pool(&self, pool: &FeaturePool) -> Result<(), DataError> {
        if self.len() != pool.frames() || self.tracks != pool.tracks() {
            return Err(DataError::Invalid(format!(
                "annotation {} frames × {} tracks does not match pool {} × {}",
                self.len(),
                self.tracks,
                pool.frames(),
                pool.tracks()
            )));
        }
        Ok(())
    }
}

/// A maximal run of consecutive frames on one track: `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shot {
    pub start: usize,
    pub end: usize,
    pub track: usize,
}

impl Shot {
    pub fn frames(&self) -> usize {
        self.end - self.start
    }

    pub fn seconds(&self, fps: f64) -> f64 {
        self.frames() as f64 / fps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_indexing_is_row_major_frame_track() {
        let mut data = Vec::new();
        for i in 0..3 {
            for j in 0..2 {
                data.extend([i as f32, j as f32]);
            }
        }
        let pool = FeaturePool::new(3, 2, 2, 24.0, data).unwrap();
        assert_eq!(pool.frame(2, 1), &[2.0, 1.0]);
        assert_eq!(pool.frame(0, 0), &[0.0, 0.0]);
    }

    #[test]
    fn pool_rejects_wrong_payload_size_and_nan() {
        assert!(FeaturePool::new(2, 2, 2, 24.0, vec![0.0; 7]).is_err());
        assert!(FeaturePool::new(1, 1, 2, 24.0, vec![0.0, f32::NAN]).is_err());
        assert!(FeaturePool::new(1, 1, 1, 0.0, vec![0.0]).is_err());
    }

    #[test]
    fn annotation_bounds_are_validated() {
        assert!(EditAnnotation::new(vec![0, 1, 2], 3).is_ok());
        assert!(EditAnnotation::new(vec![0, 3], 3).is_err());
    }
}
