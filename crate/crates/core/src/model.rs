//! The full correlation-distance model: windowed graphs in, response
//! probability and training loss out.
//!
//! ```text
//! signals ─► LSTM ─► node features per window ─┬─► GIN stack on A_r ─┐
//!                                             └─► GIN stack on A_d ─┤
//!   per layer: [H_r || H_d] over windows ─► channel × temporal attention
//!   ─► mean over windows ─► concat layers ─► MLP ─► sigmoid
//!   last-layer readouts ─► shared projection ─► contrastive loss
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cdgin::{self, ContrastiveConfig, Stream};
use crate::data_io::{zscore_normalize, RoiTimeSeries};
use crate::diffcore::{ParamStore, Tape, Tensor, Var};
use crate::dynamic_fc::{self, DistanceKind, Window, WindowSpec};
use crate::error::{Error, Result};
use crate::fusion_head;
use crate::matrix::Matrix;
use crate::temporal_encoder;

/// Which graph streams are active. Disabling one stream gives the
/// single-stream ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamSelection {
    Both,
    Correlation,
    Distance,
}

impl StreamSelection {
    pub fn streams(self) -> &'static [Stream] {
        match self {
            StreamSelection::Both => &[Stream::Correlation, Stream::Distance],
            StreamSelection::Correlation => &[Stream::Correlation],
            StreamSelection::Distance => &[Stream::Distance],
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "both" => Ok(StreamSelection::Both),
            "correlation" | "pcc" => Ok(StreamSelection::Correlation),
            "distance" => Ok(StreamSelection::Distance),
            other => Err(Error::Config(format!("unknown stream selection `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub rois: usize,
    pub hidden_dim: usize,
    pub projection_dim: usize,
    pub layers: usize,
    pub classifier_hidden: usize,
    pub reduction_ratio: usize,
    pub temporal_kernel: usize,
    pub streams: StreamSelection,
    pub contrastive: ContrastiveConfig,
}

impl ModelConfig {
    pub fn channels(&self) -> usize {
        self.hidden_dim * self.streams.streams().len()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rois", self.rois),
            ("hidden_dim", self.hidden_dim),
            ("projection_dim", self.projection_dim),
            ("layers", self.layers),
            ("classifier_hidden", self.classifier_hidden),
            ("reduction_ratio", self.reduction_ratio),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.channels() % self.reduction_ratio != 0 {
            return Err(Error::Config(format!(
                "reduction_ratio {} does not divide {} channels",
                self.reduction_ratio,
                self.channels()
            )));
        }
        if self.temporal_kernel % 2 == 0 {
            return Err(Error::Config(format!("temporal kernel width {} must be odd", self.temporal_kernel)));
        }
        Ok(())
    }

    /// Glorot-uniform weights, zero biases and zero GIN epsilons.
    pub fn init_params(&self, seed: u64) -> Result<ParamStore> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (m, d) = (self.rois, self.hidden_dim);
        temporal_encoder::init_lstm(&mut store, "encoder.lstm", m, d, &mut rng);
        store.insert("encoder.w_m", Tensor::glorot(vec![d, m + d], m + d, d, &mut rng));
        for layer in 0..self.layers {
            for &s in self.streams.streams() {
                cdgin::init_gin_layer(&mut store, &cdgin::layer_prefix(layer, s), d, &mut rng);
            }
            fusion_head::init_fusion_layer(
                &mut store,
                &fusion_head::fusion_prefix(layer),
                self.channels(),
                self.reduction_ratio,
                self.temporal_kernel,
                &mut rng,
            );
        }
        cdgin::init_projection(&mut store, d, self.projection_dim, &mut rng);
        fusion_head::init_classifier(&mut store, self.layers * self.channels(), self.classifier_hidden, &mut rng);
        Ok(store)
    }
}

/// How a subject's signals become model input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputConfig {
    pub window: WindowSpec,
    pub distance: DistanceKind,
    pub normalize: bool,
}

/// Precomputed, parameter-free inputs for one subject.
#[derive(Clone, Debug)]
pub struct SubjectInput {
    pub subject_id: String,
    pub label: u8,
    /// Signals up to the last window endpoint (normalized when configured).
    pub signals: Matrix,
    pub windows: Vec<Window>,
    pub adj_r: Vec<Matrix>,
    pub adj_d: Vec<Matrix>,
}

impl SubjectInput {
    pub fn prepare(ts: &RoiTimeSeries, cfg: &InputConfig) -> Result<Self> {
        let ts = if cfg.normalize { zscore_normalize(ts) } else { ts.clone() };
        let windows = dynamic_fc::extract_windows(ts.timepoints(), cfg.window).map_err(|_| Error::WindowBudget {
            subject: ts.subject_id.clone(),
            windows: 0,
            required: 1,
        })?;
        let mut adj_r = Vec::with_capacity(windows.len());
        let mut adj_d = Vec::with_capacity(windows.len());
        for &w in &windows {
            let fc = dynamic_fc::window_fc(&ts.signals, w, cfg.distance)?;
            adj_r.push(fc.a_r);
            adj_d.push(fc.a_d);
        }
        let last = windows.last().map_or(0, Window::end);
        Ok(SubjectInput {
            subject_id: ts.subject_id.clone(),
            label: ts.label,
            signals: ts.signals.row_block(0, last + 1),
            windows,
            adj_r,
            adj_d,
        })
    }

    pub fn adjacency(&self, stream: Stream) -> &[Matrix] {
        match stream {
            Stream::Correlation => &self.adj_r,
            Stream::Distance => &self.adj_d,
        }
    }
}

/// Per-layer attention factors, kept for export.
#[derive(Clone, Copy, Debug)]
pub struct LayerAttention {
    /// `1 x C` channel factors (stream blocks in stream order).
    pub channel: Var,
    /// `N x 1` temporal factors.
    pub temporal: Var,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub prob: Var,
    pub bce: Var,
    pub info: Option<Var>,
    pub loss: Var,
    pub attention: Vec<LayerAttention>,
    /// `[layer][stream][window]` readout weights over nodes (`1 x M`).
    pub readout_attention: Vec<Vec<Vec<Var>>>,
}

pub fn forward(tape: &mut Tape, params: &ParamStore, cfg: &ModelConfig, input: &SubjectInput) -> Result<ForwardOutput> {
    let n = input.windows.len();
    let streams = cfg.streams.streams();
    let use_contrastive = cfg.contrastive.alpha > 0.0;
    if use_contrastive && n < cfg.contrastive.delta + 1 {
        return Err(Error::WindowBudget {
            subject: input.subject_id.clone(),
            windows: n,
            required: cfg.contrastive.delta + 1,
        });
    }
    if input.signals.cols() != cfg.rois {
        return Err(Error::Shape(format!(
            "subject `{}` has {} ROIs, model expects {}",
            input.subject_id,
            input.signals.cols(),
            cfg.rois
        )));
    }

    let hidden = temporal_encoder::lstm_forward(tape, params, "encoder.lstm", &input.signals)?;
    let w_m = tape.param(params, "encoder.w_m");
    let node_features = temporal_encoder::assemble_node_features(tape, &hidden, &input.windows, w_m, cfg.rois)?;

    let adjacency: Vec<Vec<Var>> = streams
        .iter()
        .map(|&s| input.adjacency(s).iter().map(|a| tape.constant(a.clone())).collect())
        .collect();

    // current[stream][window]: node features entering the next layer
    let mut current: Vec<Vec<Var>> = vec![node_features; streams.len()];
    let mut attended = Vec::with_capacity(cfg.layers);
    let mut attention = Vec::with_capacity(cfg.layers);
    let mut readout_attention = Vec::with_capacity(cfg.layers);
    let mut last_readouts: Vec<Vec<Var>> = Vec::new();
    for layer in 0..cfg.layers {
        let mut readouts: Vec<Vec<Var>> = Vec::with_capacity(streams.len());
        let mut layer_attn = Vec::with_capacity(streams.len());
        for (si, &s) in streams.iter().enumerate() {
            let prefix = cdgin::layer_prefix(layer, s);
            let mut stream_readouts = Vec::with_capacity(n);
            let mut stream_attn = Vec::with_capacity(n);
            for t in 0..n {
                let out = cdgin::gin_layer(tape, params, &prefix, current[si][t], adjacency[si][t])?;
                current[si][t] = out.nodes;
                stream_readouts.push(out.readout);
                stream_attn.push(out.attention);
            }
            readouts.push(stream_readouts);
            layer_attn.push(stream_attn);
        }
        // N x C: row t is the concatenation of the streams' readouts.
        let rows: Vec<Var> = (0..n)
            .map(|t| {
                let parts: Vec<Var> = readouts.iter().map(|r| r[t]).collect();
                tape.concat_cols(&parts)
            })
            .collect();
        let fused = tape.concat_rows(&rows);
        let prefix = fusion_head::fusion_prefix(layer);
        let channel = fusion_head::channel_attention(tape, params, &prefix, fused);
        let temporal = fusion_head::temporal_attention(tape, params, &prefix, fused);
        attended.push(fusion_head::apply_attention(tape, fused, channel, temporal));
        attention.push(LayerAttention { channel, temporal });
        readout_attention.push(layer_attn);
        last_readouts = readouts;
    }

    let prob = fusion_head::classify(tape, params, &attended);
    let bce = fusion_head::bce(tape, prob, input.label);
    let info = if use_contrastive {
        let projected: Vec<Var> = last_readouts
            .iter()
            .map(|rs| {
                let zs: Vec<Var> = rs.iter().map(|&h| cdgin::project(tape, params, h)).collect();
                tape.concat_rows(&zs)
            })
            .collect();
        Some(cdgin::contrastive_loss(tape, &projected, &cfg.contrastive)?)
    } else {
        None
    };
    let loss = match info {
        Some(l) => {
            let weighted = tape.scale(l, cfg.contrastive.alpha);
            tape.add(bce, weighted)
        }
        None => bce,
    };
    tape.ensure_finite()?;
    Ok(ForwardOutput {
        prob,
        bce,
        info,
        loss,
        attention,
        readout_attention,
    })
}

/// Scalar results of one forward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    pub loss: f64,
    pub bce: f64,
    pub info: f64,
    pub prob: f64,
}

/// Forward (and optionally backward with gradient scale `seed`) for one
/// subject.
pub fn subject_step(
    params: &mut ParamStore,
    cfg: &ModelConfig,
    input: &SubjectInput,
    backward_seed: Option<f64>,
) -> Result<LossParts> {
    let mut tape = Tape::new();
    let out = forward(&mut tape, params, cfg, input)?;
    if let Some(seed) = backward_seed {
        tape.backward(out.loss, params, seed)?;
    }
    Ok(LossParts {
        loss: tape.scalar(out.loss),
        bce: tape.scalar(out.bce),
        info: out.info.map_or(0.0, |v| tape.scalar(v)),
        prob: tape.scalar(out.prob),
    })
}

/// Mean loss over a batch; with `with_grad`, gradients of that mean are
/// accumulated into `params`.
pub fn batch_loss(params: &mut ParamStore, cfg: &ModelConfig, batch: &[&SubjectInput], with_grad: bool) -> Result<LossParts> {
    let scale = 1.0 / batch.len() as f64;
    let mut acc = LossParts {
        loss: 0.0,
        bce: 0.0,
        info: 0.0,
        prob: 0.0,
    };
    for input in batch {
        let parts = subject_step(params, cfg, input, with_grad.then_some(scale))?;
        acc.loss += parts.loss * scale;
        acc.bce += parts.bce * scale;
        acc.info += parts.info * scale;
        acc.prob += parts.prob * scale;
    }
    Ok(acc)
}

/// Attention factors of one subject, per layer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttentionRecord {
    pub subject_id: String,
    pub label: u8,
    pub prob: f64,
    pub layers: Vec<LayerAttentionValues>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerAttentionValues {
    pub layer: usize,
    pub window_starts: Vec<usize>,
    pub temporal: Vec<f64>,
    /// Channel factors grouped by stream, in stream order.
    pub channel_by_stream: Vec<(Stream, Vec<f64>)>,
    /// Readout weights over nodes, `[stream][window][node]`.
    pub readout_by_stream: Vec<(Stream, Vec<Vec<f64>>)>,
}

impl LayerAttentionValues {
    pub fn mean_channel(&self, stream: Stream) -> Option<f64> {
        self.channel_by_stream
            .iter()
            .find(|(s, _)| *s == stream)
            .map(|(_, v)| v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub fn attention_record(params: &ParamStore, cfg: &ModelConfig, input: &SubjectInput) -> Result<AttentionRecord> {
    let mut tape = Tape::new();
    let out = forward(&mut tape, params, cfg, input)?;
    let d = cfg.hidden_dim;
    let layers = out
        .attention
        .iter()
        .enumerate()
        .map(|(layer, a)| {
            let channel = tape.value(a.channel).as_slice();
            LayerAttentionValues {
                layer,
                window_starts: input.windows.iter().map(|w| w.start).collect(),
                temporal: tape.value(a.temporal).as_slice().to_vec(),
                channel_by_stream: cfg
                    .streams
                    .streams()
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| (s, channel[i * d..(i + 1) * d].to_vec()))
                    .collect(),
                readout_by_stream: cfg
                    .streams
                    .streams()
                    .iter()
                    .zip(&out.readout_attention[layer])
                    .map(|(&s, per_window)| {
                        (s, per_window.iter().map(|&v| tape.value(v).as_slice().to_vec()).collect())
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(AttentionRecord {
        subject_id: input.subject_id.clone(),
        label: input.label,
        prob: tape.scalar(out.prob),
        layers,
    })
}
