//! The training loop: seeded shuffling over sample groups, chunked batch
//! gradients, Adam updates, and a loss curve for diagnostics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{EditAnnotation, FeaturePool};
use crate::model::scoring::{register_params, score_group_on_tape};
use crate::model::{init_params, ModelConfig, ModelParams, StreamMode};
use crate::numerics::{Tape, Tensor};

use super::adam::{adam_step, OptimizerState};
use super::sampler::{generate_boundary_samples, SampleGroup};
use super::{TrainConfig, TrainError};

/// Groups per worker tape. Fixed (not a function of the machine) so the
/// gradient summation order, and with it the loss curve, is reproducible.
const CHUNK_GROUPS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct LossPoint {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurve {
    pub points: Vec<LossPoint>,
}

impl LossCurve {
    /// Mean instance loss per epoch (1-based epochs).
    pub fn epoch_means(&self) -> Vec<f64> {
        let epochs = self.points.iter().map(|p| p.epoch).max().unwrap_or(0);
        (1..=epochs)
            .map(|e| {
                let pts: Vec<&LossPoint> = self.points.iter().filter(|p| p.epoch == e).collect();
                pts.iter().map(|p| p.loss).sum::<f64>() / pts.len().max(1) as f64
            })
            .collect()
    }

    /// Plain-text table: step, epoch, mean batch loss.
    pub fn to_table(&self) -> String {
        let mut out = String::from("step\tepoch\tmean_loss\n");
        for p in &self.points {
            out.push_str(&format!("{}\t{}\t{:.6}\n", p.step, p.epoch, p.loss));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub curve: LossCurve,
    pub groups_used: usize,
    pub clipped_groups: usize,
}

/// Summed instance losses and gradients of one worker tape.
fn chunk_gradients(
    params: &ModelParams<f32>,
    groups: &[&SampleGroup],
) -> Result<(f64, usize, Vec<Tensor<f32>>), TrainError> {
    let mut tape = Tape::<f32>::new();
    let pv = register_params(&mut tape, params);
    let mut losses = Vec::new();
    let mut instances = 0usize;
    for g in groups {
        let scores = score_group_on_tape(
            &mut tape,
            &pv,
            &params.config,
            &g.history,
            &g.context,
            StreamMode::Full,
        )?;
        for (j, &score) in scores.iter().enumerate() {
            losses.push(tape.bce(score, j == g.positive)?);
            instances += 1;
        }
    }
    let total = tape.sum_vars(&losses);
    let loss_sum = tape.value(total).item() as f64;
    let store = tape.backward(total)?;
    let grads = pv.trainable().iter().map(|&v| store.grad(v)).collect();
    Ok((loss_sum, instances, grads))
}

/// Mean instance loss and mean gradients over one batch of groups. Workers
/// process fixed-size chunks in parallel; partial sums are folded in chunk
/// order so the result does not depend on scheduling.
fn batch_gradients(
    params: &ModelParams<f32>,
    batch: &[&SampleGroup],
) -> Result<(f64, Vec<Tensor<f32>>), TrainError> {
    let chunks: Vec<&[&SampleGroup]> = batch.chunks(CHUNK_GROUPS).collect();
    let partials: Result<Vec<_>, TrainError> = chunks
        .par_iter()
        .map(|chunk| chunk_gradients(params, chunk))
        .collect();
    let partials = partials?;

    let mut iter = partials.into_iter();
    let (mut loss_sum, mut instances, mut grads) =
        iter.next().expect("batch always has at least one chunk");
    for (l, n, g) in iter {
        loss_sum += l;
        instances += n;
        for (acc, add) in grads.iter_mut().zip(&g) {
            for (a, b) in acc.data_mut().iter_mut().zip(add.data()) {
                *a += *b;
            }
        }
    }
    let inv = 1.0 / instances as f32;
    for g in &mut grads {
        for v in g.data_mut() {
            *v *= inv;
        }
    }
    Ok((loss_sum / instances as f64, grads))
}

/// Train on pre-generated sample groups.
pub fn train_on_groups(
    groups: &[SampleGroup],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_config.validate()?;
    if groups.is_empty() {
        return Err(TrainError::NoSamples);
    }
    let mut params = init_params(model_config)?;
    let mut state = OptimizerState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let mut curve = LossCurve::default();
    let mut step = 0usize;

    for epoch in 1..=train_config.epochs {
        order.shuffle(&mut rng);
        for batch_idx in order.chunks(train_config.batch_size) {
            let batch: Vec<&SampleGroup> = batch_idx.iter().map(|&i| &groups[i]).collect();
            let (loss, grads) = batch_gradients(&params, &batch)?;
            adam_step(&mut params, &grads, &mut state, train_config)?;
            step += 1;
            curve.points.push(LossPoint { step, epoch, loss });
        }
    }

    Ok(TrainOutcome {
        params,
        curve,
        groups_used: groups.len(),
        clipped_groups: 0,
    })
}

/// Generate boundary samples for every scene, then train. The sampler
/// window is the model's `w`; step and groups-per-boundary come from the
/// train config.
pub fn train(
    scenes: &[(FeaturePool, EditAnnotation)],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_config.validate()?;
    let mut all = super::sampler::BoundarySamples::default();
    for (scene, (pool, ann)) in scenes.iter().enumerate() {
        all.merge(generate_boundary_samples(
            pool,
            ann,
            scene,
            model_config.w,
            train_config.step,
            train_config.groups_per_boundary,
        )?);
    }
    let clipped = all.clipped_groups;
    let mut outcome = train_on_groups(&all.groups, model_config, train_config)?;
    outcome.clipped_groups = clipped;
    Ok(outcome)
}
