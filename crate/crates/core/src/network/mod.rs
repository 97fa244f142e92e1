//! Convolutional front end, three unidirectional recurrent layers, and two
//! heads running at different rates.
//!
//! Layer order for a stacked input of `T0` frames:
//!
//! ```text
//! stacked (T0 × W·D) → volume (mel, stack, 1)
//!   → conv + act → conv + act            T1 = (T0 − kt)/st + 1, T2 likewise
//!   → rnn1 → rnn2 → reduce(R2) → proj2    S  = ceil(T2 / R2)
//!   → slot head
//!   → [proj2 ‖ slot probs] → rnn3 → reduce(R3) → proj3
//!   → intent head                         I  = ceil(S / R3)
//! ```

mod checkpoint;
pub mod kernels;
mod params;
mod stream;
pub mod tape;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ctc::{FrameLogProbs, LossResult};
use crate::ctl::EventProbs;
use crate::error::{Error, Result};
use crate::features::{stack_frames, stacked_len, FeatureMatrix};
use crate::math::{log_softmax_rows, softmax_row, Matrix};

pub use checkpoint::{config_digest, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CKPT_MAGIC, CKPT_VERSION};
pub use kernels::{Activation, CellKind, ConvGeom};
pub use params::{BlockId, BlockInfo, ModelParams, ParamLayout};
pub use stream::{HeadFrame, NetworkStream};
use tape::{time_reduce_concat, NodeId, RecurrentBlocks, Tape};

/// Which output head a frame or event belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Slot,
    Intent,
}

impl std::fmt::Display for Head {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Head::Slot => "slot",
            Head::Intent => "intent",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    /// Softmax over classes plus blank at index 0.
    #[default]
    Ctc,
    /// Independent sigmoid per class.
    Ctl,
}

impl HeadMode {
    pub fn head_size(self, classes: usize) -> usize {
        match self {
            HeadMode::Ctc => classes + 1,
            HeadMode::Ctl => classes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    /// `(time, mel, stack)`.
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn new(out_channels: usize) -> Self {
        Self {
            kernel: [5, 5, 1],
            stride: [2, 2, 1],
            out_channels,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub feat_dim: usize,
    pub stack_width: usize,
    pub stack_stride: usize,
    pub conv: Vec<ConvSpec>,
    pub conv_activation: Activation,
    pub cell: CellKind,
    pub hidden: [usize; 3],
    pub slot_reduction: usize,
    pub intent_reduction: usize,
    pub slot_projection: usize,
    pub intent_projection: usize,
    /// Number of slot classes, excluding blank.
    pub slot_vocab: usize,
    /// Number of intent classes, excluding blank.
    pub intent_vocab: usize,
    pub head_mode: HeadMode,
    /// Classes of the layer-1 auxiliary CTC head, excluding blank. Zero
    /// disables the head.
    pub aux_vocab: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feat_dim: 16,
            stack_width: 8,
            stack_stride: 3,
            conv: vec![ConvSpec::new(16), ConvSpec::new(32)],
            conv_activation: Activation::Tanh,
            cell: CellKind::Lstm,
            hidden: [32, 32, 32],
            slot_reduction: 4,
            intent_reduction: 4,
            slot_projection: 32,
            intent_projection: 32,
            slot_vocab: 8,
            intent_vocab: 15,
            head_mode: HeadMode::Ctc,
            aux_vocab: 0,
        }
    }
}

/// Sequence lengths after each stage for a given number of raw frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputLengths {
    pub stacked: usize,
    pub conv: Vec<usize>,
    pub slot: usize,
    pub intent: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("feat_dim", self.feat_dim),
            ("stack_width", self.stack_width),
            ("stack_stride", self.stack_stride),
            ("hidden[0]", self.hidden[0]),
            ("hidden[1]", self.hidden[1]),
            ("hidden[2]", self.hidden[2]),
            ("slot_reduction", self.slot_reduction),
            ("intent_reduction", self.intent_reduction),
            ("slot_projection", self.slot_projection),
            ("intent_projection", self.intent_projection),
            ("slot_vocab", self.slot_vocab),
            ("intent_vocab", self.intent_vocab),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        self.conv_geoms().map(|_| ())
    }

    pub fn conv_geoms(&self) -> Result<Vec<ConvGeom>> {
        let (mut mel, mut stack, mut ch) = (self.feat_dim, self.stack_width, 1);
        let mut out = Vec::with_capacity(self.conv.len());
        for (i, c) in self.conv.iter().enumerate() {
            if c.kernel.contains(&0) || c.stride.contains(&0) || c.out_channels == 0 {
                return Err(Error::Config(format!("conv{}: zero kernel, stride or channels", i + 1)));
            }
            if mel < c.kernel[1] || stack < c.kernel[2] {
                return Err(Error::Config(format!(
                    "conv{}: kernel {:?} does not fit input (mel {mel}, stack {stack})",
                    i + 1,
                    c.kernel
                )));
            }
            let g = ConvGeom {
                kernel: c.kernel,
                stride: c.stride,
                in_mel: mel,
                in_stack: stack,
                in_channels: ch,
                out_mel: (mel - c.kernel[1]) / c.stride[1] + 1,
                out_stack: (stack - c.kernel[2]) / c.stride[2] + 1,
                out_channels: c.out_channels,
            };
            (mel, stack, ch) = (g.out_mel, g.out_stack, g.out_channels);
            out.push(g);
        }
        Ok(out)
    }

    /// Width of the recurrent input after the convolutional front end.
    pub fn frontend_dim(&self) -> Result<usize> {
        Ok(match self.conv_geoms()?.last() {
            Some(g) => g.out_row(),
            None => self.feat_dim * self.stack_width,
        })
    }

    pub fn slot_head_size(&self) -> usize {
        self.head_mode.head_size(self.slot_vocab)
    }

    pub fn intent_head_size(&self) -> usize {
        self.head_mode.head_size(self.intent_vocab)
    }

    /// Slot frames per intent frame.
    pub fn rate_ratio(&self) -> usize {
        self.intent_reduction
    }

    /// Smallest stacked length that survives every valid convolution.
    pub fn min_stacked_len(&self) -> usize {
        self.conv
            .iter()
            .rev()
            .fold(1, |len, c| (len - 1) * c.stride[0] + c.kernel[0])
    }

    /// Smallest raw frame count accepted by the model.
    pub fn min_raw_len(&self) -> usize {
        (self.min_stacked_len() - 1) * self.stack_stride + self.stack_width
    }

    pub fn output_lengths(&self, raw_frames: usize) -> OutputLengths {
        let stacked = stacked_len(raw_frames, self.stack_width, self.stack_stride);
        let mut conv = Vec::with_capacity(self.conv.len());
        let mut len = stacked;
        for c in &self.conv {
            len = if len < c.kernel[0] {
                0
            } else {
                (len - c.kernel[0]) / c.stride[0] + 1
            };
            conv.push(len);
        }
        let slot = len.div_ceil(self.slot_reduction);
        OutputLengths {
            stacked,
            conv,
            slot,
            intent: slot.div_ceil(self.intent_reduction),
        }
    }
}

/// One head's outputs at its own rate.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadOutput {
    pub mode: HeadMode,
    pub logits: Matrix,
    /// Row softmax for CTC heads, element-wise sigmoid for CTL heads.
    pub probs: Matrix,
}

impl HeadOutput {
    pub fn frame_count(&self) -> usize {
        self.logits.rows()
    }

    pub fn log_probs(&self) -> Result<FrameLogProbs> {
        FrameLogProbs::new(log_softmax_rows(&self.logits))
    }

    pub fn event_probs(&self) -> Result<EventProbs> {
        EventProbs::new(self.probs.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub slot: HeadOutput,
    pub intent: HeadOutput,
    pub rate_ratio: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Depth {
    /// Front end, first recurrent layer and the auxiliary head only.
    Layer1,
    #[default]
    Full,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOptions {
    /// Dropout rate on recurrent outputs; zero disables it.
    pub dropout: f64,
    pub mask_seed: u64,
    /// Stop gradients below the first recurrent layer.
    pub freeze_layer1: bool,
    pub depth: Depth,
}

#[derive(Clone, Copy, Debug)]
struct LayerIds {
    conv: [(BlockId, BlockId); 2],
    n_conv: usize,
    rnn: [RecurrentBlocks; 3],
    proj2: (BlockId, BlockId),
    slot: (BlockId, BlockId),
    proj3: (BlockId, BlockId),
    intent: (BlockId, BlockId),
    aux: Option<(BlockId, BlockId)>,
}

/// A model architecture: configuration plus parameter layout.
#[derive(Clone, Debug)]
pub struct Network {
    cfg: ModelConfig,
    geoms: Vec<ConvGeom>,
    layout: ParamLayout,
    ids: LayerIds,
}

/// Tape nodes a loss may seed.
#[derive(Clone, Copy, Debug)]
pub struct HeadNodes {
    pub slot_logits: Option<NodeId>,
    pub slot_probs: Option<NodeId>,
    pub intent_logits: Option<NodeId>,
    pub intent_probs: Option<NodeId>,
    pub aux_logits: Option<NodeId>,
}

/// Upstream gradients for [`Network::backward`]. Unset entries contribute
/// nothing.
#[derive(Clone, Debug, Default)]
pub struct HeadGrads {
    pub slot_logits: Option<Matrix>,
    pub slot_probs: Option<Matrix>,
    pub intent_logits: Option<Matrix>,
    pub intent_probs: Option<Matrix>,
    pub aux_logits: Option<Matrix>,
}

/// A forward pass kept alive for back-propagation.
pub struct TrainForward<'p> {
    tape: Tape<'p>,
    pub nodes: HeadNodes,
}

impl<'p> TrainForward<'p> {
    fn head(&self, logits: Option<NodeId>, probs: Option<NodeId>, mode: HeadMode) -> Option<HeadOutput> {
        Some(HeadOutput {
            mode,
            logits: self.tape.value(logits?).clone(),
            probs: self.tape.value(probs?).clone(),
        })
    }

    pub fn slot(&self, mode: HeadMode) -> Option<HeadOutput> {
        self.head(self.nodes.slot_logits, self.nodes.slot_probs, mode)
    }

    pub fn intent(&self, mode: HeadMode) -> Option<HeadOutput> {
        self.head(self.nodes.intent_logits, self.nodes.intent_probs, mode)
    }

    pub fn aux_logits(&self) -> Option<&Matrix> {
        self.nodes.aux_logits.map(|n| self.tape.value(n))
    }
}

impl Network {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.conv.len() > 2 {
            return Err(Error::Config("at most two convolution layers are supported".into()));
        }
        let geoms = cfg.conv_geoms()?;
        let mut layout = ParamLayout::default();
        let mut conv = [(BlockId(0), BlockId(0)); 2];
        for (i, g) in geoms.iter().enumerate() {
            let fan_in = g.weight_len() / g.out_channels;
            let w = layout.add(format!("conv{}.w", i + 1), fan_in, g.out_channels, fan_in);
            let b = layout.add(format!("conv{}.b", i + 1), 1, g.out_channels, fan_in);
            conv[i] = (w, b);
        }
        let front = cfg.frontend_dim()?;
        let gates = cfg.cell.gates();
        let [h1, h2, h3] = cfg.hidden;
        let rnn_in = [front, h1, cfg.slot_projection + cfg.slot_head_size()];
        let mut rnn = Vec::with_capacity(3);
        for (i, (&inp, &h)) in rnn_in.iter().zip(&cfg.hidden).enumerate() {
            let n = i + 1;
            rnn.push(RecurrentBlocks {
                kind: cfg.cell,
                hidden: h,
                w_ih: layout.add(format!("rnn{n}.w_ih"), inp, gates * h, inp),
                w_hh: layout.add(format!("rnn{n}.w_hh"), h, gates * h, h),
                b_ih: layout.add(format!("rnn{n}.b_ih"), 1, gates * h, h),
                b_hh: layout.add(format!("rnn{n}.b_hh"), 1, gates * h, h),
            });
        }
        let mut dense = |name: &str, inp: usize, out: usize| {
            (
                layout.add(format!("{name}.w"), inp, out, inp),
                layout.add(format!("{name}.b"), 1, out, inp),
            )
        };
        let proj2 = dense("proj2", cfg.slot_reduction * h2, cfg.slot_projection);
        let slot = dense("slot", cfg.slot_projection, cfg.slot_head_size());
        let proj3 = dense("proj3", cfg.intent_reduction * h3, cfg.intent_projection);
        let intent = dense("intent", cfg.intent_projection, cfg.intent_head_size());
        let aux = (cfg.aux_vocab > 0).then(|| dense("aux", h1, cfg.aux_vocab + 1));
        let ids = LayerIds {
            conv,
            n_conv: geoms.len(),
            rnn: [rnn[0], rnn[1], rnn[2]],
            proj2,
            slot,
            proj3,
            intent,
            aux,
        };
        Ok(Self {
            cfg,
            geoms,
            layout,
            ids,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.len()
    }

    pub fn init_params(&self, seed: u64) -> ModelParams {
        ModelParams::init(self.layout.clone(), seed)
    }

    pub fn zero_params(&self) -> ModelParams {
        ModelParams::zeros(self.layout.clone())
    }

    pub fn params_from_vec(&self, values: Vec<f64>) -> Result<ModelParams> {
        ModelParams::from_vec(self.layout.clone(), values)
    }

    /// Names of the blocks trained during layer-1 pretraining.
    pub fn layer1_blocks(&self) -> Vec<BlockId> {
        let mut out = Vec::new();
        for &(w, b) in &self.ids.conv[..self.ids.n_conv] {
            out.extend([w, b]);
        }
        let r = self.ids.rnn[0];
        out.extend([r.w_ih, r.w_hh, r.b_ih, r.b_hh]);
        if let Some((w, b)) = self.ids.aux {
            out.extend([w, b]);
        }
        out
    }

    fn check_params(&self, params: &ModelParams) -> Result<()> {
        if params.layout() != &self.layout {
            return Err(Error::TapeMismatch("parameter layout does not match the network".into()));
        }
        Ok(())
    }

    fn check_input(&self, x: &FeatureMatrix) -> Result<()> {
        let want = self.cfg.feat_dim * self.cfg.stack_width;
        if x.dim() != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                got: x.dim(),
            });
        }
        let min = self.cfg.min_stacked_len();
        if x.frame_count() < min {
            return Err(Error::InputTooShort {
                got: x.frame_count(),
                min,
            });
        }
        Ok(())
    }

    /// Stacks CMVN-normalized raw features and runs [`Network::forward`].
    pub fn forward_features(&self, params: &ModelParams, raw: &FeatureMatrix) -> Result<ForwardOutput> {
        let stacked = stack_frames(raw, self.cfg.stack_width, self.cfg.stack_stride)?;
        self.forward(params, &stacked)
    }

    /// Inference on a stacked input.
    pub fn forward(&self, params: &ModelParams, x: &FeatureMatrix) -> Result<ForwardOutput> {
        let fwd = self.forward_train(params, x, ForwardOptions::default())?;
        let mode = self.cfg.head_mode;
        let missing = || Error::TapeMismatch("head missing from a full forward pass".into());
        Ok(ForwardOutput {
            slot: fwd.slot(mode).ok_or_else(missing)?,
            intent: fwd.intent(mode).ok_or_else(missing)?,
            rate_ratio: self.cfg.rate_ratio(),
        })
    }

    /// Forward pass that records a tape for [`Network::backward`].
    pub fn forward_train<'p>(
        &self,
        params: &'p ModelParams,
        x: &FeatureMatrix,
        opts: ForwardOptions,
    ) -> Result<TrainForward<'p>> {
        self.check_params(params)?;
        self.check_input(x)?;
        let cfg = &self.cfg;
        let ids = &self.ids;
        let mut tape = Tape::new(params);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.mask_seed);
        let mut dropout = |tape: &mut Tape, n: NodeId| -> Result<NodeId> {
            if opts.dropout <= 0.0 {
                return Ok(n);
            }
            let (r, c) = tape.value(n).shape();
            let keep = 1.0 - opts.dropout;
            let mask = (0..r * c)
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            tape.dropout(n, Matrix::from_vec(r, c, mask))
        };

        let mut volume = Matrix::zeros(x.frame_count(), x.dim());
        for t in 0..x.frame_count() {
            stacked_to_volume(x.frame(t), cfg.feat_dim, cfg.stack_width, volume.row_mut(t));
        }
        let mut h = tape.input(volume);
        for (g, &(w, b)) in self.geoms.iter().zip(&ids.conv) {
            h = tape.conv(h, *g, w, b)?;
            h = tape.activation(h, cfg.conv_activation);
        }
        let r1 = tape.recurrent(h, ids.rnn[0]);
        let mut nodes = HeadNodes {
            slot_logits: None,
            slot_probs: None,
            intent_logits: None,
            intent_probs: None,
            aux_logits: None,
        };
        if let Some((w, b)) = ids.aux {
            nodes.aux_logits = Some(tape.linear(r1, w, b));
        }
        if opts.depth == Depth::Layer1 {
            return Ok(TrainForward { tape, nodes });
        }
        let mut r1 = dropout(&mut tape, r1)?;
        if opts.freeze_layer1 {
            r1 = tape.detach(r1);
        }
        let r2 = tape.recurrent(r1, ids.rnn[1]);
        let r2 = dropout(&mut tape, r2)?;
        let red2 = tape.time_reduce(r2, cfg.slot_reduction);
        let p2 = tape.linear(red2, ids.proj2.0, ids.proj2.1);
        let slot_logits = tape.linear(p2, ids.slot.0, ids.slot.1);
        let slot_probs = match cfg.head_mode {
            HeadMode::Ctc => tape.softmax(slot_logits),
            HeadMode::Ctl => tape.sigmoid(slot_logits),
        };
        let in3 = tape.concat(p2, slot_probs)?;
        let r3 = tape.recurrent(in3, ids.rnn[2]);
        let r3 = dropout(&mut tape, r3)?;
        let red3 = tape.time_reduce(r3, cfg.intent_reduction);
        let p3 = tape.linear(red3, ids.proj3.0, ids.proj3.1);
        let intent_logits = tape.linear(p3, ids.intent.0, ids.intent.1);
        let intent_probs = match cfg.head_mode {
            HeadMode::Ctc => tape.softmax(intent_logits),
            HeadMode::Ctl => tape.sigmoid(intent_logits),
        };
        nodes.slot_logits = Some(slot_logits);
        nodes.slot_probs = Some(slot_probs);
        nodes.intent_logits = Some(intent_logits);
        nodes.intent_probs = Some(intent_probs);
        Ok(TrainForward { tape, nodes })
    }

    /// Gradient of the composed loss with respect to every parameter.
    pub fn backward(&self, fwd: &TrainForward, grads: HeadGrads) -> Result<Vec<f64>> {
        if fwd.tape.params().layout() != &self.layout {
            return Err(Error::TapeMismatch("tape was recorded for a different network".into()));
        }
        let pairs = [
            (fwd.nodes.slot_logits, grads.slot_logits, "slot logits"),
            (fwd.nodes.slot_probs, grads.slot_probs, "slot probs"),
            (fwd.nodes.intent_logits, grads.intent_logits, "intent logits"),
            (fwd.nodes.intent_probs, grads.intent_probs, "intent probs"),
            (fwd.nodes.aux_logits, grads.aux_logits, "aux logits"),
        ];
        let mut seeds = Vec::new();
        for (node, g, name) in pairs {
            match (node, g) {
                (Some(n), Some(g)) => seeds.push((n, g)),
                (None, Some(_)) => {
                    return Err(Error::TapeMismatch(format!("no {name} node on this tape")))
                }
                _ => {}
            }
        }
        fwd.tape.backward(&seeds)
    }
}

/// Reorders one stacked row (`stack`-major, `mel`-minor) into the
/// `(mel, stack)` volume layout used by the convolutions.
pub fn stacked_to_volume(row: &[f64], feat_dim: usize, width: usize, out: &mut [f64]) {
    for s in 0..width {
        for m in 0..feat_dim {
            out[m * width + s] = row[s * feat_dim + m];
        }
    }
}

/// Concatenates groups of `factor` rows (last group zero-padded) and projects
/// them with `w` (`factor·H × H'`) and `b`.
pub fn time_reduce(states: &Matrix, factor: usize, w: &Matrix, b: &[f64]) -> Result<Matrix> {
    if factor == 0 {
        return Err(Error::InvalidArgument("reduction factor must be >= 1".into()));
    }
    let grouped = time_reduce_concat(states, factor);
    if w.rows() != grouped.cols() || w.cols() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: grouped.cols(),
            got: w.rows(),
        });
    }
    let mut out = Matrix::zeros(grouped.rows(), b.len());
    for t in 0..grouped.rows() {
        kernels::linear_row(grouped.row(t), w.as_slice(), b, out.row_mut(t));
    }
    Ok(out)
}

pub const DEFAULT_W_SEQ: f64 = 0.6;
pub const DEFAULT_W_CE: f64 = 0.4;

/// `w_seq · sequence loss + w_ce · CE(softmax(final logits row), label)`.
///
/// The sequence gradient must be shaped like `logits`; the CE gradient lands
/// on the last row only.
pub fn last_step_ce(
    logits: &Matrix,
    label: usize,
    sequence: &LossResult,
    w_seq: f64,
    w_ce: f64,
) -> Result<LossResult> {
    if w_seq < 0.0 || w_ce < 0.0 || (w_seq + w_ce - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "loss weights must be non-negative and sum to one (got {w_seq}, {w_ce})"
        )));
    }
    if logits.rows() == 0 {
        return Err(Error::NoFrames);
    }
    if label >= logits.cols() {
        return Err(Error::LabelOutOfVocab {
            label,
            vocab: logits.cols(),
        });
    }
    if sequence.grad.shape() != logits.shape() {
        return Err(Error::DimensionMismatch {
            expected: logits.rows() * logits.cols(),
            got: sequence.grad.rows() * sequence.grad.cols(),
        });
    }
    let last = logits.rows() - 1;
    let mut p = vec![0.0; logits.cols()];
    softmax_row(logits.row(last), &mut p);
    let ce = -crate::math::log_softmax_row(logits.row(last))[label];
    let mut grad = sequence.grad.clone();
    grad.scale(w_seq);
    for (k, g) in grad.row_mut(last).iter_mut().enumerate() {
        let onehot = if k == label { 1.0 } else { 0.0 };
        *g += w_ce * (p[k] - onehot);
    }
    Ok(LossResult {
        loss: w_seq * sequence.loss + w_ce * ce,
        grad,
    })
}
