//! Boundary-centric training samples.
//!
//! Every shot boundary `b` spawns `groups_per_boundary` sample groups with
//! end frames `b + k·step`; each group scores all J tracks at its end frame
//! against a teacher-forced history of ground-truth selections.

use crate::data::{EditAnnotation, FeaturePool};
use crate::numerics::Tensor;

use super::TrainError;

/// One training instance: a candidate track at a frame, with the shared
/// history window and concurrent context.
#[derive(Debug, Clone)]
pub struct Sample {
    pub scene: usize,
    pub frame: usize,
    /// Teacher-forced `w × d_in` window of previously selected frames,
    /// zero-padded at the sequence start.
    pub history: Tensor<f32>,
    /// All `J` concurrent frames at `frame`; row `track` is the candidate.
    pub context: Tensor<f32>,
    pub track: usize,
    pub label: bool,
}

/// The J instances sharing one (scene, frame) position. Exactly one of
/// them — `positive` — is the ground-truth selection.
#[derive(Debug, Clone)]
pub struct SampleGroup {
    pub scene: usize,
    pub frame: usize,
    pub history: Tensor<f32>,
    pub context: Tensor<f32>,
    pub positive: usize,
}

impl SampleGroup {
    pub fn tracks(&self) -> usize {
        self.context.shape()[0]
    }

    /// Expand into owned per-track instances.
    pub fn samples(&self) -> Vec<Sample> {
        (0..self.tracks())
            .map(|j| Sample {
                scene: self.scene,
                frame: self.frame,
                history: self.history.clone(),
                context: self.context.clone(),
                track: j,
                label: j == self.positive,
            })
            .collect()
    }
}

/// Output of the sampler, with the number of groups dropped because their
/// end frame fell past the end of the scene.
#[derive(Debug, Clone, Default)]
pub struct BoundarySamples {
    pub groups: Vec<SampleGroup>,
    pub clipped_groups: usize,
}

impl BoundarySamples {
    pub fn instance_count(&self) -> usize {
        self.groups.iter().map(|g| g.tracks()).sum()
    }

    pub fn merge(&mut self, other: BoundarySamples) {
        self.groups.extend(other.groups);
        self.clipped_groups += other.clipped_groups;
    }
}

/// Shot boundaries of an annotation: every shot's first frame, including
/// frame 0, so the boundary count equals the shot count.
pub fn shot_boundaries(ann: &EditAnnotation) -> Vec<usize> {
    let sel = ann.selected();
    let mut out = Vec::new();
    for i in 0..sel.len() {
        if i == 0 || sel[i] != sel[i - 1] {
            out.push(i);
        }
    }
    out
}

/// Teacher-forced history window ending just before `end`: rows are the
/// ground-truth selected frames `end−w .. end−1`, zero rows before frame 0.
pub fn teacher_forced_history(
    pool: &FeaturePool,
    ann: &EditAnnotation,
    end: usize,
    w: usize,
) -> Tensor<f32> {
    let d = pool.dim();
    let mut data = vec![0.0f32; w * d];
    for (row, t) in (end.saturating_sub(w)..end).enumerate() {
        let row = row + w - end.min(w); // left-pad when end < w
        data[row * d..(row + 1) * d].copy_from_slice(pool.frame(t, ann.track(t)));
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

/// Generate the boundary-anchored sample groups of one scene.
pub fn generate_boundary_samples(
    pool: &FeaturePool,
    ann: &EditAnnotation,
    scene: usize,
    w: usize,
    step: usize,
    groups_per_boundary: usize,
) -> Result<BoundarySamples, TrainError> {
    if ann.len() == 0 {
        return Err(TrainError::EmptyAnnotation);
    }
    if w == 0 || step == 0 || groups_per_boundary == 0 {
        return Err(TrainError::BadSampler {
            w,
            step,
            groups: groups_per_boundary,
        });
    }
    if ann.len() != pool.frames() || ann.tracks() != pool.tracks() {
        return Err(TrainError::PoolAnnotationMismatch {
            pool: pool.frames(),
            pool_tracks: pool.tracks(),
            annotation: ann.len(),
            ann_tracks: ann.tracks(),
        });
    }

    let mut out = BoundarySamples::default();
    for b in shot_boundaries(ann) {
        for k in 0..groups_per_boundary {
            let end = b + k * step;
            if end >= pool.frames() {
                out.clipped_groups += 1;
                continue;
            }
            out.groups.push(SampleGroup {
                scene,
                frame: end,
                history: teacher_forced_history(pool, ann, end, w),
                context: context_at(pool, end),
                positive: ann.track(end),
            });
        }
    }
    Ok(out)
}
