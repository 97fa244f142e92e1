//! Incremental inference. Every stage keeps just enough buffered context to
//! produce the same rows as the offline tape, using the same row kernels.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::features::{CmvnStats, FeatureMatrix};
use crate::math::{sigmoid, softmax_row};

use super::kernels::{cell_step, conv_row, linear_row, CellState, CellWeights, ConvGeom};
use super::tape::RecurrentBlocks;
use super::{stacked_to_volume, BlockId, Head, HeadMode, ModelParams, Network};

/// One output row of a head, produced as soon as its inputs are complete.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadFrame {
    pub head: Head,
    /// Index in head-rate frames.
    pub index: usize,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Sliding window over a row stream: emits window `k` covering rows
/// `[k·stride, k·stride + kernel)` once they have all arrived.
struct Window {
    kernel: usize,
    stride: usize,
    buf: VecDeque<Vec<f64>>,
    base: usize,
    next: usize,
}

impl Window {
    fn new(kernel: usize, stride: usize) -> Self {
        Self {
            kernel,
            stride,
            buf: VecDeque::new(),
            base: 0,
            next: 0,
        }
    }

    fn emitted(&self) -> usize {
        self.next
    }

    fn take<F: FnMut(&[&[f64]]) -> Vec<f64>>(&mut self, mut f: F) -> Option<Vec<f64>> {
        let start = self.next * self.stride;
        if self.base + self.buf.len() < start + self.kernel {
            return None;
        }
        let rows: Vec<&[f64]> = (start..start + self.kernel)
            .map(|i| self.buf[i - self.base].as_slice())
            .collect();
        let out = f(&rows);
        self.next += 1;
        let keep_from = self.next * self.stride;
        while self.base < keep_from && !self.buf.is_empty() {
            self.buf.pop_front();
            self.base += 1;
        }
        Some(out)
    }
}

struct Cell {
    blocks: RecurrentBlocks,
    state: CellState,
}

impl Cell {
    fn step(&mut self, params: &ModelParams, x: &[f64]) -> Vec<f64> {
        let b = &self.blocks;
        let w = CellWeights {
            kind: b.kind,
            hidden: b.hidden,
            w_ih: params.block(b.w_ih),
            w_hh: params.block(b.w_hh),
            b_ih: params.block(b.b_ih),
            b_hh: params.block(b.b_hh),
        };
        cell_step(&w, x, &mut self.state);
        self.state.h.clone()
    }
}

/// Concatenates groups of `factor` rows.
struct Group {
    factor: usize,
    width: usize,
    rows: Vec<Vec<f64>>,
}

impl Group {
    fn push(&mut self, row: Vec<f64>) -> Option<Vec<f64>> {
        self.rows.push(row);
        (self.rows.len() == self.factor).then(|| self.flush())
    }

    /// Emits the pending partial group zero-padded, if any.
    fn flush_partial(&mut self) -> Option<Vec<f64>> {
        (!self.rows.is_empty()).then(|| self.flush())
    }

    fn flush(&mut self) -> Vec<f64> {
        let mut out = vec![0.0; self.factor * self.width];
        for (k, r) in self.rows.drain(..).enumerate() {
            out[k * self.width..(k + 1) * self.width].copy_from_slice(&r);
        }
        out
    }
}

/// Streaming state of one session through the network.
pub struct NetworkStream<'a> {
    net: &'a Network,
    params: &'a ModelParams,
    cmvn: Option<(CmvnStats, f64)>,
    stack: Window,
    convs: Vec<(ConvGeom, BlockId, BlockId, Window)>,
    cells: [Cell; 3],
    group2: Group,
    group3: Group,
    slot_frames: usize,
    intent_frames: usize,
    finished: bool,
}

fn dense(params: &ModelParams, (w, b): (BlockId, BlockId), x: &[f64]) -> Vec<f64> {
    let bv = params.block(b);
    let mut out = vec![0.0; bv.len()];
    linear_row(x, params.block(w), bv, &mut out);
    out
}

impl<'a> NetworkStream<'a> {
    pub fn new(net: &'a Network, params: &'a ModelParams) -> Result<Self> {
        net.check_params(params)?;
        let cfg = net.config();
        let convs = net
            .geoms
            .iter()
            .zip(&net.ids.conv)
            .map(|(g, &(w, b))| (*g, w, b, Window::new(g.kernel[0], g.stride[0])))
            .collect();
        let cells = net.ids.rnn.map(|blocks| Cell {
            blocks,
            state: CellState::zeros(blocks.hidden),
        });
        Ok(Self {
            net,
            params,
            cmvn: None,
            stack: Window::new(cfg.stack_width, cfg.stack_stride),
            convs,
            cells,
            group2: Group {
                factor: cfg.slot_reduction,
                width: cfg.hidden[1],
                rows: Vec::new(),
            },
            group3: Group {
                factor: cfg.intent_reduction,
                width: cfg.hidden[2],
                rows: Vec::new(),
            },
            slot_frames: 0,
            intent_frames: 0,
            finished: false,
        })
    }

    /// Normalizes each incoming raw frame with `stats` before stacking.
    pub fn with_cmvn(mut self, stats: CmvnStats, eps: f64) -> Result<Self> {
        if stats.dim() != self.net.config().feat_dim {
            return Err(Error::DimensionMismatch {
                expected: self.net.config().feat_dim,
                got: stats.dim(),
            });
        }
        self.cmvn = Some((stats, eps));
        Ok(self)
    }

    pub fn slot_frames(&self) -> usize {
        self.slot_frames
    }

    pub fn intent_frames(&self) -> usize {
        self.intent_frames
    }

    /// Feeds a chunk of raw frames and returns every head frame completed by
    /// it, in production order.
    pub fn push(&mut self, chunk: &FeatureMatrix) -> Result<Vec<HeadFrame>> {
        if self.finished {
            return Err(Error::InvalidArgument("stream already finished".into()));
        }
        let cfg = self.net.config();
        if chunk.dim() != cfg.feat_dim && !chunk.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: cfg.feat_dim,
                got: chunk.dim(),
            });
        }
        let mut out = Vec::new();
        for t in 0..chunk.frame_count() {
            let mut frame = chunk.frame(t).to_vec();
            if let Some((stats, eps)) = &self.cmvn {
                stats.normalize_frame(&mut frame, *eps);
            }
            self.stack.buf.push_back(frame);
            let (d, w) = (cfg.feat_dim, cfg.stack_width);
            while let Some(vol) = self.stack.take(|rows| {
                let stacked = rows.concat();
                let mut vol = vec![0.0; d * w];
                stacked_to_volume(&stacked, d, w, &mut vol);
                vol
            }) {
                self.feed_frontend(vol, &mut out);
            }
        }
        Ok(out)
    }

    /// Flushes the zero-padded partial groups at end of input.
    pub fn finish(&mut self) -> Result<Vec<HeadFrame>> {
        if self.finished {
            return Ok(Vec::new());
        }
        self.finished = true;
        let min = self.net.config().min_stacked_len();
        if self.stack.emitted() < min {
            return Err(Error::InputTooShort {
                got: self.stack.emitted(),
                min,
            });
        }
        let mut out = Vec::new();
        if let Some(g) = self.group2.flush_partial() {
            self.slot_step(g, &mut out);
        }
        if let Some(g) = self.group3.flush_partial() {
            self.intent_step(g, &mut out);
        }
        Ok(out)
    }

    fn feed_frontend(&mut self, row: Vec<f64>, out: &mut Vec<HeadFrame>) {
        let act = self.net.config().conv_activation;
        let mut rows = vec![row];
        for (g, w, b, win) in self.convs.iter_mut() {
            let mut next = Vec::new();
            for r in rows {
                win.buf.push_back(r);
                let (wv, bv) = (self.params.block(*w), self.params.block(*b));
                while let Some(o) = win.take(|inp| {
                    let mut o = vec![0.0; g.out_row()];
                    conv_row(g, inp, wv, bv, &mut o);
                    o.iter_mut().for_each(|v| *v = act.apply(*v));
                    o
                }) {
                    next.push(o);
                }
            }
            rows = next;
        }
        for r in rows {
            let h1 = self.cells[0].step(self.params, &r);
            let h2 = self.cells[1].step(self.params, &h1);
            if let Some(g) = self.group2.push(h2) {
                self.slot_step(g, out);
            }
        }
    }

    fn probs(&self, logits: &[f64]) -> Vec<f64> {
        match self.net.config().head_mode {
            HeadMode::Ctc => {
                let mut p = vec![0.0; logits.len()];
                softmax_row(logits, &mut p);
                p
            }
            HeadMode::Ctl => logits.iter().map(|&v| sigmoid(v)).collect(),
        }
    }

    fn slot_step(&mut self, grouped: Vec<f64>, out: &mut Vec<HeadFrame>) {
        let ids = &self.net.ids;
        let p2 = dense(self.params, ids.proj2, &grouped);
        let logits = dense(self.params, ids.slot, &p2);
        let probs = self.probs(&logits);
        let mut in3 = p2;
        in3.extend_from_slice(&probs);
        out.push(HeadFrame {
            head: Head::Slot,
            index: self.slot_frames,
            logits,
            probs,
        });
        self.slot_frames += 1;
        let h3 = self.cells[2].step(self.params, &in3);
        if let Some(g) = self.group3.push(h3) {
            self.intent_step(g, out);
        }
    }

    fn intent_step(&mut self, grouped: Vec<f64>, out: &mut Vec<HeadFrame>) {
        let ids = &self.net.ids;
        let p3 = dense(self.params, ids.proj3, &grouped);
        let logits = dense(self.params, ids.intent, &p3);
        let probs = self.probs(&logits);
        out.push(HeadFrame {
            head: Head::Intent,
            index: self.intent_frames,
            logits,
            probs,
        });
        self.intent_frames += 1;
    }
}
