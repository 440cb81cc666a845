//! Boundary-centric sample generation, the classification loss, and the
//! Adam training loop.

mod adam;
mod sampler;
mod trainer;

pub use adam::{adam_step, OptimizerState};
pub use sampler::{
    generate_boundary_samples, shot_boundaries, BoundarySamples, Sample, SampleGroup,
};
pub use trainer::{train, train_on_groups, LossCurve, LossPoint, TrainOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelError;
use crate::numerics::{TensorError, BCE_EPS};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("annotation is empty")]
    EmptyAnnotation,
    #[error("pool has {pool} frames / {pool_tracks} tracks but annotation covers {annotation} frames / {ann_tracks} tracks")]
    PoolAnnotationMismatch {
        pool: usize,
        pool_tracks: usize,
        annotation: usize,
        ann_tracks: usize,
    },
    #[error("sampler settings must be ≥ 1 (w={w}, step={step}, groups_per_boundary={groups})")]
    BadSampler { w: usize, step: usize, groups: usize },
    #[error("no sample groups to train on")]
    NoSamples,
    #[error("invalid train config: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("gradient layout mismatch: {got} tensors, parameters have {expected}")]
    GradientLayout { got: usize, expected: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Binary cross-entropy `−[y·log p + (1−y)·log(1−p)]` with `p` clamped to
/// `[1e-7, 1−1e-7]`. Batch losses are means over instances of this value.
pub fn bce_loss(p: f64, y: bool) -> f64 {
    let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    if y {
        -pc.ln()
    } else {
        -(1.0 - pc).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Decoupled weight decay on weight matrices (biases and norm
    /// parameters are exempt). Keeps the scorer from memorizing its way
    /// through small corpora.
    pub weight_decay: f64,
    /// Batch size in sample groups (each group holds J instances).
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Frame step between a boundary's sample groups.
    pub step: usize,
    /// Sample groups emitted per shot boundary.
    pub groups_per_boundary: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.01,
            batch_size: 32,
            epochs: 20,
            seed: 0,
            step: 5,
            groups_per_boundary: 6,
        }
    }
}

impl TrainConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.learning_rate > 0.0) {
            out.push(format!("train.learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            out.push(format!("train.beta1 must be in [0, 1), got {}", self.beta1));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            out.push(format!("train.beta2 must be in [0, 1), got {}", self.beta2));
        }
        if !(self.adam_eps > 0.0) {
            out.push(format!("train.adam_eps must be > 0, got {}", self.adam_eps));
        }
        if !(self.weight_decay >= 0.0) {
            out.push(format!(
                "train.weight_decay must be ≥ 0, got {}",
                self.weight_decay
            ));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("step", self.step),
            ("groups_per_boundary", self.groups_per_boundary),
        ] {
            if v == 0 {
                out.push(format!("train.{name} must be ≥ 1"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(TrainError::Config(problems))
        }
    }
}
