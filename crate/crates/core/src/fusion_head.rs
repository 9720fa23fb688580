//! CBAM-style stream (channel) and temporal attention over the per-window
//! concatenation of stream readouts, followed by the response classifier and
//! the training objective.

use rand::Rng;

use crate::cdgin::mlp2;
use crate::diffcore::{Axis, ParamStore, Tape, Tensor, Var};

/// Largest odd width not exceeding `min(7, windows)`.
pub fn temporal_kernel_width(windows: usize) -> usize {
    let w = windows.clamp(1, 7);
    if w % 2 == 0 {
        w - 1
    } else {
        w
    }
}

pub fn fusion_prefix(layer: usize) -> String {
    format!("fusion.layer{layer}")
}

pub fn init_fusion_layer<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    channels: usize,
    reduction: usize,
    kernel_width: usize,
    rng: &mut R,
) {
    let hidden = (channels / reduction).max(1);
    store.insert(format!("{prefix}.channel.w1"), Tensor::glorot(vec![channels, hidden], channels, hidden, rng));
    store.insert(format!("{prefix}.channel.b1"), Tensor::zeros(vec![hidden]));
    store.insert(format!("{prefix}.channel.w2"), Tensor::glorot(vec![hidden, channels], hidden, channels, rng));
    store.insert(format!("{prefix}.channel.b2"), Tensor::zeros(vec![channels]));
    store.insert(
        format!("{prefix}.temporal.kernel"),
        Tensor::glorot(vec![1, 2, kernel_width], 2 * kernel_width, kernel_width, rng),
    );
}

/// `sigmoid(MLP(max_t H) + MLP(mean_t H))`: one factor per channel, `1 x C`.
pub fn channel_attention(tape: &mut Tape, params: &ParamStore, prefix: &str, fused: Var) -> Var {
    let mlp = format!("{prefix}.channel");
    let max = tape.max_axis(fused, Axis::Rows);
    let mean = tape.mean_axis(fused, Axis::Rows);
    let from_max = mlp2(tape, params, &mlp, max);
    let from_mean = mlp2(tape, params, &mlp, mean);
    let logits = tape.add(from_max, from_mean);
    tape.sigmoid(logits)
}

/// `sigmoid(conv(max_c H) + conv(mean_c H))` with the two pooled sequences as
/// the two input channels of one zero-padded convolution: one factor per
/// window, `N x 1`.
pub fn temporal_attention(tape: &mut Tape, params: &ParamStore, prefix: &str, fused: Var) -> Var {
    let kernel = tape.param(params, &format!("{prefix}.temporal.kernel"));
    let width = tape.shape(kernel).1 / 2;
    let max = tape.max_axis(fused, Axis::Cols);
    let mean = tape.mean_axis(fused, Axis::Cols);
    let stacked = tape.concat_cols(&[max, mean]);
    let channels = tape.transpose(stacked);
    let conv = tape.conv1d(channels, kernel, width, (width - 1) / 2);
    let factors = tape.sigmoid(conv);
    tape.transpose(factors)
}

/// `H_a[t, c] = H_f[t, c] * channel[c] * temporal[t]`.
pub fn apply_attention(tape: &mut Tape, fused: Var, channel: Var, temporal: Var) -> Var {
    let scaled = tape.mul(fused, channel);
    tape.mul(scaled, temporal)
}

pub fn init_classifier<R: Rng>(store: &mut ParamStore, inputs: usize, hidden: usize, rng: &mut R) {
    store.insert("classifier.w1", Tensor::glorot(vec![inputs, hidden], inputs, hidden, rng));
    store.insert("classifier.b1", Tensor::zeros(vec![hidden]));
    store.insert("classifier.w2", Tensor::glorot(vec![hidden, 1], hidden, 1, rng));
    store.insert("classifier.b2", Tensor::zeros(vec![1]));
}

/// Mean over windows per layer, concatenated across layers, then a two-layer
/// MLP and a sigmoid. Returns the `1 x 1` response probability.
pub fn classify(tape: &mut Tape, params: &ParamStore, attended: &[Var]) -> Var {
    let pooled: Vec<Var> = attended.iter().map(|&h| tape.mean_axis(h, Axis::Rows)).collect();
    let joined = tape.concat_cols(&pooled);
    let logit = mlp2(tape, params, "classifier", joined);
    tape.sigmoid(logit)
}

/// Binary cross-entropy of `prob` against `label`; logs are floored so the
/// probability is effectively clamped to `[1e-12, 1 - 1e-12]`.
pub fn bce(tape: &mut Tape, prob: Var, label: u8) -> Var {
    if label == 1 {
        let l = tape.log(prob);
        tape.scale(l, -1.0)
    } else {
        let neg = tape.scale(prob, -1.0);
        let complement = tape.offset(neg, 1.0);
        let l = tape.log(complement);
        tape.scale(l, -1.0)
    }
}

/// `BCE + alpha * L_info`; with no contrastive term (or `alpha == 0`) this is
/// the BCE node itself.
pub fn total_loss(tape: &mut Tape, prob: Var, label: u8, info: Option<Var>, alpha: f64) -> Var {
    let ce = bce(tape, prob, label);
    match info {
        Some(l) if alpha != 0.0 => {
            let weighted = tape.scale(l, alpha);
            tape.add(ce, weighted)
        }
        _ => ce,
    }
}
