//! Greedy CTC and thresholded CTL decoding, offline or chunk by chunk.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ctc::{LabelSequence, BLANK};
use crate::error::{Error, Result};
use crate::features::{CmvnStats, FeatureMatrix};
use crate::math::log_softmax_row;
use crate::network::{ForwardOutput, HeadFrame, HeadMode, HeadOutput, ModelParams, Network, NetworkStream};

pub use crate::network::Head;

pub const DEFAULT_THETA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeEvent {
    pub head: Head,
    /// Class id, starting at 1.
    pub label: usize,
    /// Index in head-rate frames.
    pub frame: usize,
    pub score: f64,
}

/// Decoding memory of one head.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HeadState {
    /// Last CTC argmax, blank included.
    pub last_symbol: Option<usize>,
    pub emitted: LabelSequence,
    pub frames_seen: usize,
    /// Previous CTL event probabilities, for the rectified delta.
    prev_y: Option<Vec<f64>>,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Emits the argmax symbol unless it is blank or repeats the previous one.
pub fn greedy_ctc_step(state: &mut HeadState, head: Head, logp: &[f64]) -> Option<DecodeEvent> {
    let s = argmax(logp);
    let frame = state.frames_seen;
    state.frames_seen += 1;
    let repeat = state.last_symbol == Some(s);
    state.last_symbol = Some(s);
    if s == BLANK || repeat {
        return None;
    }
    state.emitted.push(s);
    Some(DecodeEvent {
        head,
        label: s,
        frame,
        score: logp[s].exp(),
    })
}

/// Emits every class whose onset probability reaches `theta`, in id order.
/// `z` is indexed from class 1 at position 0.
pub fn ctl_threshold_step(state: &mut HeadState, head: Head, z: &[f64], theta: f64) -> Vec<DecodeEvent> {
    let frame = state.frames_seen;
    state.frames_seen += 1;
    let mut out = Vec::new();
    for (e, &v) in z.iter().enumerate() {
        if v >= theta {
            state.emitted.push(e + 1);
            out.push(DecodeEvent {
                head,
                label: e + 1,
                frame,
                score: v,
            });
        }
    }
    out
}

/// Onset probabilities `max(0, y_t − y_{t−1})` with `y_{−1} = 0`.
pub fn onset_row(prev: Option<&[f64]>, y: &[f64]) -> Vec<f64> {
    match prev {
        Some(p) => y.iter().zip(p).map(|(a, b)| (a - b).max(0.0)).collect(),
        None => y.iter().map(|a| a.max(0.0)).collect(),
    }
}

/// Both heads' decoding state.
#[derive(Clone, Debug)]
pub struct Decoder {
    pub mode: HeadMode,
    pub theta: f64,
    pub slot: HeadState,
    pub intent: HeadState,
    pub events: Vec<DecodeEvent>,
}

impl Decoder {
    pub fn new(mode: HeadMode, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidArgument(format!("theta must be in (0, 1), got {theta}")));
        }
        Ok(Self {
            mode,
            theta,
            slot: HeadState::default(),
            intent: HeadState::default(),
            events: Vec::new(),
        })
    }

    /// Decodes one head row given its logits and probabilities.
    pub fn step(&mut self, head: Head, logits: &[f64], probs: &[f64]) -> Vec<DecodeEvent> {
        let state = match head {
            Head::Slot => &mut self.slot,
            Head::Intent => &mut self.intent,
        };
        let new = match self.mode {
            HeadMode::Ctc => greedy_ctc_step(state, head, &log_softmax_row(logits))
                .into_iter()
                .collect(),
            HeadMode::Ctl => {
                let z = onset_row(state.prev_y.as_deref(), probs);
                state.prev_y = Some(probs.to_vec());
                ctl_threshold_step(state, head, &z, self.theta)
            }
        };
        self.events.extend_from_slice(&new);
        new
    }

    pub fn step_frame(&mut self, f: &HeadFrame) -> Vec<DecodeEvent> {
        self.step(f.head, &f.logits, &f.probs)
    }

    pub fn result(&self) -> DecodeResult {
        DecodeResult {
            intents: self.intent.emitted.clone(),
            slots: self.slot.emitted.clone(),
            events: self.events.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    pub intents: LabelSequence,
    pub slots: LabelSequence,
    pub events: Vec<DecodeEvent>,
}

/// Decodes a single-shot forward pass, visiting head rows in the order a
/// stream would produce them.
pub fn decode_output(out: &ForwardOutput, theta: f64) -> Result<DecodeResult> {
    let mut d = Decoder::new(out.slot.mode, theta)?;
    let r3 = out.rate_ratio.max(1);
    let row = |h: &HeadOutput, k: usize| (h.logits.row(k).to_vec(), h.probs.row(k).to_vec());
    let mut next_intent = 0;
    for k in 0..out.slot.frame_count() {
        let (l, p) = row(&out.slot, k);
        d.step(Head::Slot, &l, &p);
        if (k + 1) % r3 == 0 && next_intent < out.intent.frame_count() {
            let (l, p) = row(&out.intent, next_intent);
            d.step(Head::Intent, &l, &p);
            next_intent += 1;
        }
    }
    while next_intent < out.intent.frame_count() {
        let (l, p) = row(&out.intent, next_intent);
        d.step(Head::Intent, &l, &p);
        next_intent += 1;
    }
    Ok(d.result())
}

/// Normalizes (optionally), runs the network once and decodes.
pub fn decode_utterance(
    net: &Network,
    params: &ModelParams,
    raw: &FeatureMatrix,
    cmvn: Option<(&CmvnStats, f64)>,
    theta: f64,
) -> Result<DecodeResult> {
    let x = match cmvn {
        Some((s, eps)) => crate::features::apply_cmvn(raw, s, eps)?,
        None => raw.clone(),
    };
    decode_output(&net.forward_features(params, &x)?, theta)
}

/// One streaming session: network state plus decoder state.
pub struct StreamState<'a> {
    net: NetworkStream<'a>,
    decoder: Decoder,
}

impl<'a> StreamState<'a> {
    pub fn new(net: &'a Network, params: &'a ModelParams, theta: f64) -> Result<Self> {
        Ok(Self {
            net: NetworkStream::new(net, params)?,
            decoder: Decoder::new(net.config().head_mode, theta)?,
        })
    }

    pub fn with_cmvn(mut self, stats: CmvnStats, eps: f64) -> Result<Self> {
        self.net = self.net.with_cmvn(stats, eps)?;
        Ok(self)
    }

    /// Feeds raw frames; returns the events they complete.
    pub fn push(&mut self, chunk: &FeatureMatrix) -> Result<Vec<DecodeEvent>> {
        let frames = self.net.push(chunk)?;
        Ok(frames.iter().flat_map(|f| self.decoder.step_frame(f)).collect())
    }

    /// Ends the input and returns the remaining events.
    pub fn finish(&mut self) -> Result<Vec<DecodeEvent>> {
        let frames = self.net.finish()?;
        Ok(frames.iter().flat_map(|f| self.decoder.step_frame(f)).collect())
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    pub fn result(&self) -> DecodeResult {
        self.decoder.result()
    }
}

/// Decodes `raw` in chunks of `chunk_size` frames.
pub fn stream_decode(
    net: &Network,
    params: &ModelParams,
    raw: &FeatureMatrix,
    chunk_size: usize,
    cmvn: Option<(&CmvnStats, f64)>,
    theta: f64,
) -> Result<DecodeResult> {
    if chunk_size == 0 {
        return Err(Error::InvalidArgument("chunk size must be >= 1".into()));
    }
    let mut s = StreamState::new(net, params, theta)?;
    if let Some((stats, eps)) = cmvn {
        s = s.with_cmvn(stats.clone(), eps)?;
    }
    for c in raw.chunks(chunk_size) {
        s.push(&c)?;
    }
    s.finish()?;
    Ok(s.result())
}

/// 1 iff the sequences match in content and order.
pub fn sequence_accuracy(pred: &LabelSequence, truth: &LabelSequence) -> u8 {
    u8::from(pred == truth)
}

/// 1 iff both heads match exactly.
pub fn joint_accuracy(
    intents: (&LabelSequence, &LabelSequence),
    slots: (&LabelSequence, &LabelSequence),
) -> u8 {
    sequence_accuracy(intents.0, intents.1) * sequence_accuracy(slots.0, slots.1)
}

#[derive(Serialize)]
struct EventRecord<'a> {
    session: &'a str,
    head: Head,
    frame: usize,
    label: usize,
    score: f64,
}

/// Writes one JSON object per event with fields in a fixed order.
pub fn write_event_log<W: Write>(mut w: W, session: &str, events: &[DecodeEvent]) -> Result<()> {
    for e in events {
        let rec = EventRecord {
            session,
            head: e.head,
            frame: e.frame,
            label: e.label,
            score: e.score,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
