//! Adam with bias correction over the model's canonical tensor order.

use crate::model::ModelParams;
use crate::numerics::Tensor;

use super::{TrainConfig, TrainError};

/// First/second moment estimates per trainable tensor, plus the step count.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams<f32>) -> Self {
        let zeros: Vec<Tensor<f32>> = params
            .named_tensors()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape().to_vec()))
            .collect();
        OptimizerState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One Adam update. `grads` must align with `ModelParams::named_tensors`.
pub fn adam_step(
    params: &mut ModelParams<f32>,
    grads: &[Tensor<f32>],
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    let mut tensors = params.tensors_mut();
    if grads.len() != tensors.len() || grads.len() != state.m.len() {
        return Err(TrainError::GradientLayout {
            got: grads.len(),
            expected: tensors.len(),
        });
    }
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != tensors[i].shape() {
            return Err(TrainError::GradientLayout {
                got: grads.len(),
                expected: tensors.len(),
            });
        }
    }

    state.t += 1;
    let b1 = config.beta1 as f32;
    let b2 = config.beta2 as f32;
    let bias1 = 1.0 - (config.beta1).powi(state.t as i32);
    let bias2 = 1.0 - (config.beta2).powi(state.t as i32);
    let lr = config.learning_rate;
    let eps = config.adam_eps;

    for ((theta, g), (m, v)) in tensors
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        // Decoupled decay on weight matrices only; biases and norm
        // parameters are rank-1 and stay unregularized.
        let decay = if theta.rank() == 2 {
            (lr * config.weight_decay) as f32
        } else {
            0.0
        };
        let md = m.data_mut();
        let vd = v.data_mut();
        let gd = g.data();
        let td = theta.data_mut();
        for i in 0..gd.len() {
            md[i] = b1 * md[i] + (1.0 - b1) * gd[i];
            vd[i] = b2 * vd[i] + (1.0 - b2) * gd[i] * gd[i];
            let m_hat = md[i] as f64 / bias1;
            let v_hat = vd[i] as f64 / bias2;
            td[i] -= (lr * m_hat / (v_hat.sqrt() + eps)) as f32 + decay * td[i];
        }
    }
    Ok(())
}
