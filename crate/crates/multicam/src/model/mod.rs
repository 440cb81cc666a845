//! The track-scoring model: a temporal encoder over the history window
//! plus candidate frame, a contextual encoder over all concurrent tracks,
//! and a fusion head producing a selection probability per candidate.

mod encoder;
pub mod checkpoint;
pub mod scoring;

pub use encoder::sinusoidal_table;
pub use scoring::{
    encode_contextual, encode_temporal, forward_batch, predict_score, score_group, StreamMode,
};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{Scalar, Tensor, TensorError};

/// Layer-norm epsilon used throughout the model.
pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("history must be {rows} rows of width {cols}, got shape {shape:?}")]
    BadHistory {
        rows: usize,
        cols: usize,
        shape: Vec<usize>,
    },
    #[error("context must be J×{cols} with J ≥ 1, got shape {shape:?}")]
    BadContext { cols: usize, shape: Vec<usize> },
    #[error("track index {index} out of range for {tracks} tracks")]
    TrackOutOfRange { index: usize, tracks: usize },
    #[error("{tracks} tracks exceed the embedding table (max_tracks = {max_tracks})")]
    TooManyTracks { tracks: usize, max_tracks: usize },
    #[error("heterogeneous batch: sample {index} has history {history:?} / context width {width}, expected history {expected_history:?} / width {expected_width}")]
    HeterogeneousBatch {
        index: usize,
        history: Vec<usize>,
        width: usize,
        expected_history: Vec<usize>,
        expected_width: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Width of the per-frame feature vectors.
    pub d_in: usize,
    pub d_model: usize,
    pub n_heads: usize,
    /// Encoder depth over the history window.
    pub n_layers_t: usize,
    /// Encoder depth over the concurrent tracks.
    pub n_layers_c: usize,
    /// History window length in frames.
    pub w: usize,
    pub d_ff: usize,
    pub d_fuse: usize,
    /// Give the contextual encoder a learned per-track embedding. Off by
    /// default: camera order is arbitrary and scores stay permutation
    /// equivariant.
    pub use_track_embedding: bool,
    pub max_tracks: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_in: 16,
            d_model: 64,
            n_heads: 4,
            n_layers_t: 2,
            n_layers_c: 2,
            w: 16,
            d_ff: 128,
            d_fuse: 64,
            use_track_embedding: false,
            max_tracks: 8,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// A deliberately small configuration for gradient checking.
    pub fn tiny() -> Self {
        ModelConfig {
            d_in: 5,
            d_model: 8,
            n_heads: 2,
            n_layers_t: 1,
            n_layers_c: 1,
            w: 4,
            d_ff: 16,
            d_fuse: 8,
            use_track_embedding: false,
            max_tracks: 4,
            seed: 0,
        }
    }

    /// Every violated invariant, so callers can report them together.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("d_in", self.d_in),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_layers_t", self.n_layers_t),
            ("n_layers_c", self.n_layers_c),
            ("w", self.w),
            ("d_ff", self.d_ff),
            ("d_fuse", self.d_fuse),
            ("max_tracks", self.max_tracks),
        ] {
            if v == 0 {
                out.push(format!("model.{name} must be ≥ 1"));
            }
        }
        if self.n_heads > 0 && self.d_model % self.n_heads != 0 {
            out.push(format!(
                "model.d_model ({}) must be divisible by n_heads ({})",
                self.d_model, self.n_heads
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Config(problems))
        }
    }
}

/// Weights of one pre-norm encoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_gain: Tensor<T>,
    pub ln1_bias: Tensor<T>,
    pub w_q: Tensor<T>,
    pub b_q: Tensor<T>,
    pub w_k: Tensor<T>,
    pub b_k: Tensor<T>,
    pub w_v: Tensor<T>,
    pub b_v: Tensor<T>,
    pub w_o: Tensor<T>,
    pub b_o: Tensor<T>,
    pub ln2_gain: Tensor<T>,
    pub ln2_bias: Tensor<T>,
    pub ff_w1: Tensor<T>,
    pub ff_b1: Tensor<T>,
    pub ff_w2: Tensor<T>,
    pub ff_b2: Tensor<T>,
}

/// All model weights. The positional table is part of the checkpoint but
/// fixed (sinusoidal), so it is excluded from the trainable set. Each
/// pre-norm encoder stack ends with a final layer norm, so the fusion
/// head scores normalized representations.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    pub config: ModelConfig,
    pub input_proj: Tensor<T>,
    pub input_bias: Tensor<T>,
    pub pos_table: Tensor<T>,
    pub track_embedding: Option<Tensor<T>>,
    pub temporal: Vec<LayerParams<T>>,
    pub temporal_final_gain: Tensor<T>,
    pub temporal_final_bias: Tensor<T>,
    pub contextual: Vec<LayerParams<T>>,
    pub contextual_final_gain: Tensor<T>,
    pub contextual_final_bias: Tensor<T>,
    pub fuse_w1: Tensor<T>,
    pub fuse_b1: Tensor<T>,
    pub fuse_w2: Tensor<T>,
    pub fuse_b2: Tensor<T>,
}

fn glorot<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::from_f64(rng.random_range(-limit..limit)))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("glorot shape")
}

fn layer_init<T: Scalar>(rng: &mut ChaCha8Rng, d_model: usize, d_ff: usize) -> LayerParams<T> {
    LayerParams {
        ln1_gain: Tensor::filled(vec![d_model], T::one()),
        ln1_bias: Tensor::zeros(vec![d_model]),
        w_q: glorot(rng, d_model, d_model),
        b_q: Tensor::zeros(vec![d_model]),
        w_k: glorot(rng, d_model, d_model),
        b_k: Tensor::zeros(vec![d_model]),
        w_v: glorot(rng, d_model, d_model),
        b_v: Tensor::zeros(vec![d_model]),
        w_o: glorot(rng, d_model, d_model),
        b_o: Tensor::zeros(vec![d_model]),
        ln2_gain: Tensor::filled(vec![d_model], T::one()),
        ln2_bias: Tensor::zeros(vec![d_model]),
        ff_w1: glorot(rng, d_model, d_ff),
        ff_b1: Tensor::zeros(vec![d_ff]),
        ff_w2: glorot(rng, d_ff, d_model),
        ff_b2: Tensor::zeros(vec![d_model]),
    }
}

/// Deterministic initialization: Glorot-uniform weights, zero biases,
/// unit layer-norm gains, fixed sinusoidal positions.
pub fn init_params(config: &ModelConfig) -> Result<ModelParams<f32>, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let c = config;
    Ok(ModelParams {
        config: c.clone(),
        input_proj: glorot(&mut rng, c.d_in, c.d_model),
        input_bias: Tensor::zeros(vec![c.d_model]),
        pos_table: sinusoidal_table(c.w + 1, c.d_model),
        track_embedding: c
            .use_track_embedding
            .then(|| glorot(&mut rng, c.max_tracks, c.d_model)),
        temporal: (0..c.n_layers_t)
            .map(|_| layer_init(&mut rng, c.d_model, c.d_ff))
            .collect(),
        temporal_final_gain: Tensor::filled(vec![c.d_model], 1.0),
        temporal_final_bias: Tensor::zeros(vec![c.d_model]),
        contextual: (0..c.n_layers_c)
            .map(|_| layer_init(&mut rng, c.d_model, c.d_ff))
            .collect(),
        contextual_final_gain: Tensor::filled(vec![c.d_model], 1.0),
        contextual_final_bias: Tensor::zeros(vec![c.d_model]),
        fuse_w1: glorot(&mut rng, 2 * c.d_model, c.d_fuse),
        fuse_b1: Tensor::zeros(vec![c.d_fuse]),
        // Damped output head: fresh models score near 0.5 instead of
        // starting with confident logits.
        fuse_w2: {
            let mut t: Tensor<f32> = glorot(&mut rng, c.d_fuse, 1);
            for v in t.data_mut() {
                *v *= 0.02;
            }
            t
        },
        fuse_b2: Tensor::zeros(vec![1]),
    })
}

impl<T: Scalar> ModelParams<T> {
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let cast_layer = |l: &LayerParams<T>| LayerParams {
            ln1_gain: l.ln1_gain.cast(),
            ln1_bias: l.ln1_bias.cast(),
            w_q: l.w_q.cast(),
            b_q: l.b_q.cast(),
            w_k: l.w_k.cast(),
            b_k: l.b_k.cast(),
            w_v: l.w_v.cast(),
            b_v: l.b_v.cast(),
            w_o: l.w_o.cast(),
            b_o: l.b_o.cast(),
            ln2_gain: l.ln2_gain.cast(),
            ln2_bias: l.ln2_bias.cast(),
            ff_w1: l.ff_w1.cast(),
            ff_b1: l.ff_b1.cast(),
            ff_w2: l.ff_w2.cast(),
            ff_b2: l.ff_b2.cast(),
        };
        ModelParams {
            config: self.config.clone(),
            input_proj: self.input_proj.cast(),
            input_bias: self.input_bias.cast(),
            pos_table: self.pos_table.cast(),
            track_embedding: self.track_embedding.as_ref().map(|t| t.cast()),
            temporal: self.temporal.iter().map(cast_layer).collect(),
            temporal_final_gain: self.temporal_final_gain.cast(),
            temporal_final_bias: self.temporal_final_bias.cast(),
            contextual: self.contextual.iter().map(cast_layer).collect(),
            contextual_final_gain: self.contextual_final_gain.cast(),
            contextual_final_bias: self.contextual_final_bias.cast(),
            fuse_w1: self.fuse_w1.cast(),
            fuse_b1: self.fuse_b1.cast(),
            fuse_w2: self.fuse_w2.cast(),
            fuse_b2: self.fuse_b2.cast(),
        }
    }

    /// Trainable tensors with their canonical names, in canonical order.
    /// This order defines gradient, optimizer-state and checkpoint layout.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = vec![
            ("input_proj".into(), &self.input_proj),
            ("input_bias".into(), &self.input_bias),
        ];
        if let Some(emb) = &self.track_embedding {
            out.push(("track_embedding".into(), emb));
        }
        for (prefix, layers, final_gain, final_bias) in [
            (
                "temporal",
                &self.temporal,
                &self.temporal_final_gain,
                &self.temporal_final_bias,
            ),
            (
                "contextual",
                &self.contextual,
                &self.contextual_final_gain,
                &self.contextual_final_bias,
            ),
        ] {
            for (i, l) in layers.iter().enumerate() {
                for (field, t) in [
                    ("ln1_gain", &l.ln1_gain),
                    ("ln1_bias", &l.ln1_bias),
                    ("w_q", &l.w_q),
                    ("b_q", &l.b_q),
                    ("w_k", &l.w_k),
                    ("b_k", &l.b_k),
                    ("w_v", &l.w_v),
                    ("b_v", &l.b_v),
                    ("w_o", &l.w_o),
                    ("b_o", &l.b_o),
                    ("ln2_gain", &l.ln2_gain),
                    ("ln2_bias", &l.ln2_bias),
                    ("ff_w1", &l.ff_w1),
                    ("ff_b1", &l.ff_b1),
                    ("ff_w2", &l.ff_w2),
                    ("ff_b2", &l.ff_b2),
                ] {
                    out.push((format!("{prefix}.{i}.{field}"), t));
                }
            }
            out.push((format!("{prefix}.final_gain"), final_gain));
            out.push((format!("{prefix}.final_bias"), final_bias));
        }
        out.push(("fuse_w1".into(), &self.fuse_w1));
        out.push(("fuse_b1".into(), &self.fuse_b1));
        out.push(("fuse_w2".into(), &self.fuse_w2));
        out.push(("fuse_b2".into(), &self.fuse_b2));
        out
    }

    /// Mutable view of the trainable tensors, same order as `named_tensors`.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = vec![&mut self.input_proj, &mut self.input_bias];
        if let Some(emb) = &mut self.track_embedding {
            out.push(emb);
        }
        for (layers, final_gain, final_bias) in [
            (
                &mut self.temporal,
                &mut self.temporal_final_gain,
                &mut self.temporal_final_bias,
            ),
            (
                &mut self.contextual,
                &mut self.contextual_final_gain,
                &mut self.contextual_final_bias,
            ),
        ] {
            for l in layers.iter_mut() {
                out.extend([
                    &mut l.ln1_gain,
                    &mut l.ln1_bias,
                    &mut l.w_q,
                    &mut l.b_q,
                    &mut l.w_k,
                    &mut l.b_k,
                    &mut l.w_v,
                    &mut l.b_v,
                    &mut l.w_o,
                    &mut l.b_o,
                    &mut l.ln2_gain,
                    &mut l.ln2_bias,
                    &mut l.ff_w1,
                    &mut l.ff_b1,
                    &mut l.ff_w2,
                    &mut l.ff_b2,
                ]);
            }
            out.push(final_gain);
            out.push(final_bias);
        }
        out.extend([
            &mut self.fuse_w1,
            &mut self.fuse_b1,
            &mut self.fuse_w2,
            &mut self.fuse_b2,
        ]);
        out
    }

    pub fn all_finite(&self) -> bool {
        self.pos_table.all_finite() && self.named_tensors().iter().all(|(_, t)| t.all_finite())
    }

    /// Zero the fusion head; every score becomes exactly 0.5.
    pub fn zero_fusion(&mut self) {
        self.fuse_w1 = Tensor::zeros(self.fuse_w1.shape().to_vec());
        self.fuse_b1 = Tensor::zeros(self.fuse_b1.shape().to_vec());
        self.fuse_w2 = Tensor::zeros(self.fuse_w2.shape().to_vec());
        self.fuse_b2 = Tensor::zeros(self.fuse_b2.shape().to_vec());
    }
}
