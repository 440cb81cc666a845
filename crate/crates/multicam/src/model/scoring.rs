//! Candidate scoring: temporal and contextual encodings fused to a
//! selection probability per (frame, track) candidate.

use crate::numerics::{Scalar, Tape, Tensor, Var};
use crate::training::Sample;

use super::encoder::{encoder_layer, LayerVars};
use super::{ModelConfig, ModelError, ModelParams};

/// Which encoder streams feed the fusion head. The ablations zero one
/// stream at scoring time; weights are untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StreamMode {
    #[default]
    Full,
    /// Contextual stream zeroed.
    TemporalOnly,
    /// Temporal stream zeroed.
    ContextualOnly,
}

/// Tape handles for all registered weights of one forward pass.
pub(crate) struct ParamVars {
    pub input_proj: Var,
    pub input_bias: Var,
    pub pos_table: Var,
    pub track_embedding: Option<Var>,
    pub temporal: Vec<LayerVars>,
    pub temporal_final_gain: Var,
    pub temporal_final_bias: Var,
    pub contextual: Vec<LayerVars>,
    pub contextual_final_gain: Var,
    pub contextual_final_bias: Var,
    pub fuse_w1: Var,
    pub fuse_b1: Var,
    pub fuse_w2: Var,
    pub fuse_b2: Var,
}

impl ParamVars {
    /// Trainable handles in the canonical `named_tensors` order.
    pub fn trainable(&self) -> Vec<Var> {
        let mut out = vec![self.input_proj, self.input_bias];
        if let Some(emb) = self.track_embedding {
            out.push(emb);
        }
        for (layers, final_gain, final_bias) in [
            (
                &self.temporal,
                self.temporal_final_gain,
                self.temporal_final_bias,
            ),
            (
                &self.contextual,
                self.contextual_final_gain,
                self.contextual_final_bias,
            ),
        ] {
            for l in layers.iter() {
                out.extend([
                    l.ln1_gain, l.ln1_bias, l.w_q, l.b_q, l.w_k, l.b_k, l.w_v, l.b_v, l.w_o,
                    l.b_o, l.ln2_gain, l.ln2_bias, l.ff_w1, l.ff_b1, l.ff_w2, l.ff_b2,
                ]);
            }
            out.push(final_gain);
            out.push(final_bias);
        }
        out.extend([self.fuse_w1, self.fuse_b1, self.fuse_w2, self.fuse_b2]);
        out
    }
}

fn register_layer<T: Scalar>(
    tape: &mut Tape<T>,
    l: &super::LayerParams<T>,
) -> LayerVars {
    LayerVars {
        ln1_gain: tape.param(l.ln1_gain.clone()),
        ln1_bias: tape.param(l.ln1_bias.clone()),
        w_q: tape.param(l.w_q.clone()),
        b_q: tape.param(l.b_q.clone()),
        w_k: tape.param(l.w_k.clone()),
        b_k: tape.param(l.b_k.clone()),
        w_v: tape.param(l.w_v.clone()),
        b_v: tape.param(l.b_v.clone()),
        w_o: tape.param(l.w_o.clone()),
        b_o: tape.param(l.b_o.clone()),
        ln2_gain: tape.param(l.ln2_gain.clone()),
        ln2_bias: tape.param(l.ln2_bias.clone()),
        ff_w1: tape.param(l.ff_w1.clone()),
        ff_b1: tape.param(l.ff_b1.clone()),
        ff_w2: tape.param(l.ff_w2.clone()),
        ff_b2: tape.param(l.ff_b2.clone()),
    }
}

/// Register every weight on the tape. Registration order matches
/// `ModelParams::named_tensors`; the positional table joins as a fixed
/// (gradient-free) leaf.
pub(crate) fn register_params<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ModelParams<T>,
) -> ParamVars {
    let input_proj = tape.param(params.input_proj.clone());
    let input_bias = tape.param(params.input_bias.clone());
    let track_embedding = params
        .track_embedding
        .as_ref()
        .map(|t| tape.param(t.clone()));
    let temporal = params
        .temporal
        .iter()
        .map(|l| register_layer(tape, l))
        .collect();
    let temporal_final_gain = tape.param(params.temporal_final_gain.clone());
    let temporal_final_bias = tape.param(params.temporal_final_bias.clone());
    let contextual = params
        .contextual
        .iter()
        .map(|l| register_layer(tape, l))
        .collect();
    let contextual_final_gain = tape.param(params.contextual_final_gain.clone());
    let contextual_final_bias = tape.param(params.contextual_final_bias.clone());
    ParamVars {
        input_proj,
        input_bias,
        pos_table: tape.leaf(params.pos_table.clone()),
        track_embedding,
        temporal,
        temporal_final_gain,
        temporal_final_bias,
        contextual,
        contextual_final_gain,
        contextual_final_bias,
        fuse_w1: tape.param(params.fuse_w1.clone()),
        fuse_b1: tape.param(params.fuse_b1.clone()),
        fuse_w2: tape.param(params.fuse_w2.clone()),
        fuse_b2: tape.param(params.fuse_b2.clone()),
    }
}

/// Stack the history window and the candidate frame into one token matrix
/// of `w + 1` rows.
fn assemble_tokens<T: Scalar>(history: &Tensor<T>, candidate: &[T]) -> Tensor<T> {
    let d = history.cols();
    let mut data = Vec::with_capacity(history.len() + d);
    data.extend_from_slice(history.data());
    data.extend_from_slice(candidate);
    Tensor::new(vec![history.rows() + 1, d], data).expect("token matrix shape")
}

/// Temporal encoding of (history ‖ candidate): project, add positions, run
/// the temporal stack, normalize, read the representation at the
/// candidate's position.
pub(crate) fn temporal_vector<T: Scalar>(
    tape: &mut Tape<T>,
    pv: &ParamVars,
    config: &ModelConfig,
    tokens: Var,
) -> Result<Var, ModelError> {
    let mut x = tape.matmul(tokens, pv.input_proj)?;
    x = tape.add_row(x, pv.input_bias)?;
    x = tape.add(x, pv.pos_table)?;
    for layer in &pv.temporal {
        x = encoder_layer(tape, layer, x, config.n_heads)?;
    }
    x = tape.layer_norm(x, pv.temporal_final_gain, pv.temporal_final_bias, super::LN_EPS)?;
    Ok(tape.row(x, config.w)?)
}

/// Contextual encoding of all concurrent tracks, one output row per track.
pub(crate) fn contextual_matrix<T: Scalar>(
    tape: &mut Tape<T>,
    pv: &ParamVars,
    config: &ModelConfig,
    context: Var,
) -> Result<Var, ModelError> {
    let tracks = tape.value(context).shape()[0];
    let mut x = tape.matmul(context, pv.input_proj)?;
    x = tape.add_row(x, pv.input_bias)?;
    if let Some(emb) = pv.track_embedding {
        if tracks > config.max_tracks {
            return Err(ModelError::TooManyTracks {
                tracks,
                max_tracks: config.max_tracks,
            });
        }
        let rows = tape.slice_rows(emb, 0, tracks)?;
        x = tape.add(x, rows)?;
    }
    for layer in &pv.contextual {
        x = encoder_layer(tape, layer, x, config.n_heads)?;
    }
    x = tape.layer_norm(
        x,
        pv.contextual_final_gain,
        pv.contextual_final_bias,
        super::LN_EPS,
    )?;
    Ok(x)
}

/// Concatenate the two stream readouts and run the fusion head to a
/// probability. Ablation modes zero one stream first.
pub(crate) fn fuse<T: Scalar>(
    tape: &mut Tape<T>,
    pv: &ParamVars,
    temporal: Var,
    contextual: Var,
    mode: StreamMode,
) -> Result<Var, ModelError> {
    let (t, c) = match mode {
        StreamMode::Full => (temporal, contextual),
        StreamMode::TemporalOnly => (temporal, tape.scale(contextual, 0.0)),
        StreamMode::ContextualOnly => (tape.scale(temporal, 0.0), contextual),
    };
    let fused = tape.concat(&[t, c], 0)?;
    let mut h = tape.vecmat(fused, pv.fuse_w1)?;
    h = tape.add(h, pv.fuse_b1)?;
    h = tape.gelu(h);
    let mut logit = tape.vecmat(h, pv.fuse_w2)?;
    logit = tape.add(logit, pv.fuse_b2)?;
    Ok(tape.sigmoid(logit))
}

fn check_history<T: Scalar>(config: &ModelConfig, history: &Tensor<T>) -> Result<(), ModelError> {
    if history.rank() != 2 || history.shape() != [config.w, config.d_in] {
        return Err(ModelError::BadHistory {
            rows: config.w,
            cols: config.d_in,
            shape: history.shape().to_vec(),
        });
    }
    Ok(())
}

fn check_context<T: Scalar>(config: &ModelConfig, context: &Tensor<T>) -> Result<(), ModelError> {
    if context.rank() != 2 || context.shape()[1] != config.d_in {
        return Err(ModelError::BadContext {
            cols: config.d_in,
            shape: context.shape().to_vec(),
        });
    }
    Ok(())
}

/// Score all tracks of one (history, context) group on an existing tape.
/// The contextual stack runs once and is read out per track.
pub(crate) fn score_group_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    pv: &ParamVars,
    config: &ModelConfig,
    history: &Tensor<T>,
    context: &Tensor<T>,
    mode: StreamMode,
) -> Result<Vec<Var>, ModelError> {
    check_history(config, history)?;
    check_context(config, context)?;
    let tracks = context.shape()[0];
    let ctx_leaf = tape.leaf(context.clone());
    let ctx_encoded = contextual_matrix(tape, pv, config, ctx_leaf)?;
    let mut scores = Vec::with_capacity(tracks);
    for j in 0..tracks {
        let tokens = tape.leaf(assemble_tokens(history, context.row(j)));
        let t = temporal_vector(tape, pv, config, tokens)?;
        let c = tape.row(ctx_encoded, j)?;
        scores.push(fuse(tape, pv, t, c, mode)?);
    }
    Ok(scores)
}

// ── Convenience entry points (one tape per call) ─────────────────────

/// Temporal stream representation of a history window plus candidate.
pub fn encode_temporal(
    params: &ModelParams<f32>,
    history: &Tensor<f32>,
    candidate: &[f32],
) -> Result<Tensor<f32>, ModelError> {
    check_history(&params.config, history)?;
    if candidate.len() != params.config.d_in {
        return Err(ModelError::BadContext {
            cols: params.config.d_in,
            shape: vec![candidate.len()],
        });
    }
    let mut tape = Tape::new();
    let pv = register_params(&mut tape, params);
    let tokens = tape.leaf(assemble_tokens(history, candidate));
    let t = temporal_vector(&mut tape, &pv, &params.config, tokens)?;
    Ok(tape.value(t).clone())
}

/// Contextual stream representation of track `j` among its concurrent
/// candidates.
pub fn encode_contextual(
    params: &ModelParams<f32>,
    context: &Tensor<f32>,
    j: usize,
) -> Result<Tensor<f32>, ModelError> {
    check_context(&params.config, context)?;
    let tracks = context.shape()[0];
    if j >= tracks {
        return Err(ModelError::TrackOutOfRange { index: j, tracks });
    }
    let mut tape = Tape::new();
    let pv = register_params(&mut tape, params);
    let ctx = tape.leaf(context.clone());
    let m = contextual_matrix(&mut tape, &pv, &params.config, ctx)?;
    let row = tape.row(m, j)?;
    Ok(tape.value(row).clone())
}

/// Selection probability for candidate track `j`. Context row `j` is the
/// candidate frame the temporal stream sees.
pub fn predict_score(
    params: &ModelParams<f32>,
    history: &Tensor<f32>,
    context: &Tensor<f32>,
    j: usize,
) -> Result<f32, ModelError> {
    let tracks = context.shape().first().copied().unwrap_or(0);
    if j >= tracks {
        return Err(ModelError::TrackOutOfRange { index: j, tracks });
    }
    let mut tape = Tape::new();
    let pv = register_params(&mut tape, params);
    let scores = score_group_on_tape(&mut tape, &pv, &params.config, history, context, StreamMode::Full)?;
    Ok(tape.value(scores[j]).item())
}

/// Score every track of one group. Identical math to `predict_score` per
/// track, with the contextual encoding shared.
pub fn score_group(
    params: &ModelParams<f32>,
    history: &Tensor<f32>,
    context: &Tensor<f32>,
    mode: StreamMode,
) -> Result<Vec<f32>, ModelError> {
    let mut tape = Tape::new();
    let pv = register_params(&mut tape, params);
    let scores = score_group_on_tape(&mut tape, &pv, &params.config, history, context, mode)?;
    Ok(scores.iter().map(|&v| tape.value(v).item()).collect())
}

/// Score a batch of samples on a single tape, in sample order.
pub fn forward_batch(
    params: &ModelParams<f32>,
    samples: &[Sample],
) -> Result<Vec<(f32, bool)>, ModelError> {
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let expected_history = samples[0].history.shape().to_vec();
    let expected_width = samples[0].context.cols();
    for (index, s) in samples.iter().enumerate() {
        if s.history.shape() != expected_history.as_slice() || s.context.cols() != expected_width {
            return Err(ModelError::HeterogeneousBatch {
                index,
                history: s.history.shape().to_vec(),
                width: s.context.cols(),
                expected_history,
                expected_width,
            });
        }
    }
    let mut tape = Tape::new();
    let pv = register_params(&mut tape, params);
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let tracks = s.context.shape()[0];
        if s.track >= tracks {
            return Err(ModelError::TrackOutOfRange {
                index: s.track,
                tracks,
            });
        }
        let ctx_leaf = tape.leaf(s.context.clone());
        let ctx_encoded = contextual_matrix(&mut tape, &pv, &params.config, ctx_leaf)?;
        let tokens = tape.leaf(assemble_tokens(&s.history, s.context.row(s.track)));
        let t = temporal_vector(&mut tape, &pv, &params.config, tokens)?;
        let c = tape.row(ctx_encoded, s.track)?;
        let p = fuse(&mut tape, &pv, t, c, StreamMode::Full)?;
        out.push((tape.value(p).item(), s.label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f32> {
        Tensor::new(
            vec![rows, cols],
            (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn tiny_inputs(seed: u64) -> (Tensor<f32>, Tensor<f32>) {
        let cfg = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let history = random_matrix(&mut rng, cfg.w, cfg.d_in);
        let context = random_matrix(&mut rng, 3, cfg.d_in);
        (history, context)
    }

    #[test]
    fn scores_live_strictly_inside_unit_interval() {
        let params = init_params(&ModelConfig::tiny()).unwrap();
        let (history, context) = tiny_inputs(1);
        for j in 0..3 {
            let p = predict_score(&params, &history, &context, j).unwrap();
            assert!(p > 0.0 && p < 1.0, "score {p}");
        }
    }

    #[test]
    fn zero_fusion_scores_exactly_half() {
        let mut params = init_params(&ModelConfig::tiny()).unwrap();
        params.zero_fusion();
        let (history, context) = tiny_inputs(2);
        for j in 0..3 {
            assert_eq!(predict_score(&params, &history, &context, j).unwrap(), 0.5);
        }
    }

    #[test]
    fn group_path_matches_per_candidate_path_exactly() {
        let params = init_params(&ModelConfig::tiny()).unwrap();
        let (history, context) = tiny_inputs(3);
        let grouped = score_group(&params, &history, &context, StreamMode::Full).unwrap();
        for (j, &g) in grouped.iter().enumerate() {
            let single = predict_score(&params, &history, &context, j).unwrap();
            assert_eq!(g, single, "track {j}");
        }
    }

    #[test]
    fn scoring_is_deterministic() {
        let params = init_params(&ModelConfig::tiny()).unwrap();
        let (history, context) = tiny_inputs(4);
        let a = score_group(&params, &history, &context, StreamMode::Full).unwrap();
        let b = score_group(&params, &history, &context, StreamMode::Full).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn temporal_encoding_is_position_sensitive() {
        let cfg = ModelConfig::tiny();
        let params = init_params(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let history = random_matrix(&mut rng, cfg.w, cfg.d_in);
        let candidate: Vec<f32> = (0..cfg.d_in).map(|_| rng.random_range(-1.0..1.0)).collect();
        let base = encode_temporal(&params, &history, &candidate).unwrap();

        // Reverse the history rows.
        let mut rev = Vec::with_capacity(history.len());
        for r in (0..cfg.w).rev() {
            rev.extend_from_slice(history.row(r));
        }
        let reversed = Tensor::new(vec![cfg.w, cfg.d_in], rev).unwrap();
        let permuted = encode_temporal(&params, &reversed, &candidate).unwrap();
        let diff: f32 = base
            .data()
            .iter()
            .zip(permuted.data())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(diff > 1e-4, "permuting history rows must change the encoding");
    }

    #[test]
    fn all_zero_inputs_stay_finite() {
        let cfg = ModelConfig::tiny();
        let params = init_params(&cfg).unwrap();
        let history = Tensor::zeros(vec![cfg.w, cfg.d_in]);
        let context = Tensor::zeros(vec![2, cfg.d_in]);
        let p = predict_score(&params, &history, &context, 0).unwrap();
        assert!(p.is_finite());
        let enc = encode_temporal(&params, &history, &vec![0.0; cfg.d_in]).unwrap();
        assert!(enc.all_finite());
        assert_eq!(enc.len(), cfg.d_model);
    }

    #[test]
    fn contextual_encoding_is_permutation_equivariant() {
        let cfg = ModelConfig::tiny();
        let params = init_params(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let context = random_matrix(&mut rng, 4, cfg.d_in);
        // Rotate tracks by one: π(j) = (j + 1) mod 4.
        let mut rotated = Vec::with_capacity(context.len());
        for j in 0..4 {
            rotated.extend_from_slice(context.row((j + 3) % 4));
        }
        let rotated = Tensor::new(vec![4, cfg.d_in], rotated).unwrap();
        for j in 0..4 {
            let a = encode_contextual(&params, &context, j).unwrap();
            let b = encode_contextual(&params, &rotated, (j + 1) % 4).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn single_track_context_works() {
        let cfg = ModelConfig::tiny();
        let params = init_params(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let context = random_matrix(&mut rng, 1, cfg.d_in);
        let enc = encode_contextual(&params, &context, 0).unwrap();
        assert_eq!(enc.len(), cfg.d_model);
        assert!(enc.all_finite());
    }

    #[test]
    fn wrong_history_length_is_rejected() {
        let cfg = ModelConfig::tiny();
        let params = init_params(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let history = random_matrix(&mut rng, cfg.w + 1, cfg.d_in);
        let context = random_matrix(&mut rng, 2, cfg.d_in);
        assert!(predict_score(&params, &history, &context, 0).is_err());
    }

    #[test]
    fn track_index_out_of_range_is_rejected() {
        let params = init_params(&ModelConfig::tiny()).unwrap();
        let (history, context) = tiny_inputs(9);
        assert!(predict_score(&params, &history, &context, 3).is_err());
        assert!(encode_contextual(&params, &context, 3).is_err());
    }

    #[test]
    fn batch_of_one_matches_predict_score() {
        let params = init_params(&ModelConfig::tiny()).unwrap();
        let (history, context) = tiny_inputs(10);
        let sample = Sample {
            scene: 0,
            frame: 7,
            history: history.clone(),
            context: context.clone(),
            track: 1,
            label: true,
        };
        let batch = forward_batch(&params, &[sample]).unwrap();
        let single = predict_score(&params, &history, &context, 1).unwrap();
        assert_eq!(batch[0].0, single);
        assert!(batch[0].1);
    }

    #[test]
    fn batch_order_is_preserved_and_scores_bounded() {
        let params = init_params(&ModelConfig::tiny()).unwrap();
        let mut samples = Vec::new();
        for s in 0..8u64 {
            let (history, context) = tiny_inputs(100 + s);
            samples.push(Sample {
                scene: 0,
                frame: s as usize,
                history,
                context,
                track: (s % 3) as usize,
                label: s % 3 == 0,
            });
        }
        let out = forward_batch(&params, &samples).unwrap();
        assert_eq!(out.len(), 8);
        for &(p, _) in &out {
            assert!(p > 0.0 && p < 1.0);
        }
        let mut reversed = samples.clone();
        reversed.reverse();
        let out_rev = forward_batch(&params, &reversed).unwrap();
        for (a, b) in out.iter().zip(out_rev.iter().rev()) {
            assert_eq!(a.0, b.0);
        }
    }

    #[test]
    fn heterogeneous_batch_is_rejected() {
        let cfg = ModelConfig::tiny();
        let params = init_params(&cfg).unwrap();
        let (history, context) = tiny_inputs(11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let short_history = random_matrix(&mut rng, cfg.w - 1, cfg.d_in);
        let samples = vec![
            Sample {
                scene: 0,
                frame: 0,
                history,
                context: context.clone(),
                track: 0,
                label: true,
            },
            Sample {
                scene: 0,
                frame: 1,
                history: short_history,
                context,
                track: 0,
                label: false,
            },
        ];
        assert!(matches!(
            forward_batch(&params, &samples),
            Err(ModelError::HeterogeneousBatch { index: 1, .. })
        ));
    }
}
