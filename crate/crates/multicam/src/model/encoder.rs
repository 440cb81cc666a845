//! Pre-norm transformer encoder layer and the fixed positional table.

use crate::numerics::{Scalar, Tape, Tensor, TensorError, Var};

use super::LN_EPS;

/// Tape handles for one encoder layer's weights.
pub(crate) struct LayerVars {
    pub ln1_gain: Var,
    pub ln1_bias: Var,
    pub w_q: Var,
    pub b_q: Var,
    pub w_k: Var,
    pub b_k: Var,
    pub w_v: Var,
    pub b_v: Var,
    pub w_o: Var,
    pub b_o: Var,
    pub ln2_gain: Var,
    pub ln2_bias: Var,
    pub ff_w1: Var,
    pub ff_b1: Var,
    pub ff_w2: Var,
    pub ff_b2: Var,
}

/// One pre-norm block: `x + MHSA(LN(x))`, then `+ FFN(LN(·))`. Attention is
/// full (unmasked) self-attention over the whole sequence.
pub(crate) fn encoder_layer<T: Scalar>(
    tape: &mut Tape<T>,
    layer: &LayerVars,
    x: Var,
    n_heads: usize,
) -> Result<Var, TensorError> {
    let d_model = tape.value(x).shape()[1];
    let d_head = d_model / n_heads;
    let scale = 1.0 / (d_head as f64).sqrt();

    let normed = tape.layer_norm(x, layer.ln1_gain, layer.ln1_bias, LN_EPS)?;
    let q = tape.matmul(normed, layer.w_q)?;
    let q = tape.add_row(q, layer.b_q)?;
    let k = tape.matmul(normed, layer.w_k)?;
    let k = tape.add_row(k, layer.b_k)?;
    let v = tape.matmul(normed, layer.w_v)?;
    let v = tape.add_row(v, layer.b_v)?;

    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = tape.slice_cols(q, h * d_head, d_head)?;
        let kh = tape.slice_cols(k, h * d_head, d_head)?;
        let vh = tape.slice_cols(v, h * d_head, d_head)?;
        let scores = tape.matmul_trans_b(qh, kh)?;
        let scores = tape.scale(scores, scale);
        let attn = tape.softmax(scores, 1)?;
        heads.push(tape.matmul(attn, vh)?);
    }
    let merged = tape.concat(&heads, 1)?;
    let proj = tape.matmul(merged, layer.w_o)?;
    let proj = tape.add_row(proj, layer.b_o)?;
    let after_attn = tape.add(x, proj)?;

    let normed2 = tape.layer_norm(after_attn, layer.ln2_gain, layer.ln2_bias, LN_EPS)?;
    let hidden = tape.matmul(normed2, layer.ff_w1)?;
    let hidden = tape.add_row(hidden, layer.ff_b1)?;
    let hidden = tape.gelu(hidden);
    let out = tape.matmul(hidden, layer.ff_w2)?;
    let out = tape.add_row(out, layer.ff_b2)?;
    tape.add(after_attn, out)
}

/// Fixed sinusoidal positional encodings, one row per position.
pub fn sinusoidal_table(len: usize, d_model: usize) -> Tensor<f32> {
    let mut data = Vec::with_capacity(len * d_model);
    for pos in 0..len {
        for i in 0..d_model {
            let exponent = (2 * (i / 2)) as f64 / d_model as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            let v = if i % 2 == 0 { angle.sin() } else { angle.cos() };
            data.push(v as f32);
        }
    }
    Tensor::new(vec![len, d_model], data).expect("positional table shape")
}
