//! Self-checks: brute-force oracles, finite-difference gradients and
//! streaming prefix consistency.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ctc::{ctc_brute_force, ctc_grad_check, ctc_loss, FrameLogProbs, LabelSequence};
use crate::ctl::{ctl_brute_force_from_boundaries, ctl_grad_check_with, ctl_loss, ctl_loss_from_boundaries, CtlTarget, EventProbs, LabelMode};
use crate::decoder::{decode_utterance, stream_decode};
use crate::error::{Error, Result};
use crate::features::{stack_frames, FeatureMatrix};
use crate::math::Matrix;
use crate::network::{Activation, CellKind, ConvSpec, HeadMode, ModelConfig, Network};
use crate::objective::{network_grad_check, LossKind, Objective, Targets};

pub const ORACLE_TOLERANCE: f64 = 1e-9;
pub const LOSS_GRAD_TOLERANCE: f64 = 1e-4;
pub const NETWORK_GRAD_TOLERANCE: f64 = 1e-3;
pub const PREFIX_CHUNKS: [usize; 4] = [1, 2, 7, 16];

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    pub oracle_trials: usize,
    pub grad_trials: usize,
    pub stream_utterances: usize,
    /// Flip the sign of the CTL gradient; the ctl-grad suite must then fail.
    pub mutate_ctl: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            oracle_trials: 1000,
            grad_trials: 100,
            stream_utterances: 20,
            mutate_ctl: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub trials: usize,
    /// Worst error seen (absolute for oracles, relative for gradients,
    /// mismatch count for prefix checks).
    pub max_error: f64,
    pub tolerance: f64,
    pub seconds: f64,
    pub failure: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<14} {} trials={:<5} max_error={:.3e} tol={:.0e} time={:.2}s",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.trials,
            self.max_error,
            self.tolerance,
            self.seconds
        )?;
        if let Some(why) = &self.failure {
            write!(f, " ({why})")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub suites: Vec<SuiteReport>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteReport::passed)
    }

    pub fn failing(&self) -> Vec<&'static str> {
        self.suites.iter().filter(|s| !s.passed()).map(|s| s.name).collect()
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.suites {
            writeln!(f, "{s}")?;
        }
        write!(f, "{}", if self.passed() { "all suites passed" } else { "verification FAILED" })
    }
}

struct Tracker {
    name: &'static str,
    tolerance: f64,
    trials: usize,
    max_error: f64,
    failure: Option<String>,
    start: Instant,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            trials: 0,
            max_error: 0.0,
            failure: None,
            start: Instant::now(),
        }
    }

    fn error(&mut self, trial: usize, e: f64) {
        self.trials += 1;
        if !(e <= self.max_error) {
            self.max_error = e;
        }
        if !(e <= self.tolerance) && self.failure.is_none() {
            self.failure = Some(format!("trial {trial}: error {e:.3e} exceeds {:.0e}", self.tolerance));
        }
    }

    fn fail(&mut self, trial: usize, why: String) {
        self.trials += 1;
        if self.failure.is_none() {
            self.failure = Some(format!("trial {trial}: {why}"));
        }
    }

    fn finish(self) -> SuiteReport {
        SuiteReport {
            name: self.name,
            trials: self.trials,
            max_error: self.max_error,
            tolerance: self.tolerance,
            seconds: self.start.elapsed().as_secs_f64(),
            failure: self.failure,
        }
    }
}

fn random_log_probs(rng: &mut ChaCha8Rng, t: usize, v: usize) -> Result<FrameLogProbs> {
    let logits = (0..t * v).map(|_| rng.random_range(-3.0..3.0)).collect();
    FrameLogProbs::from_logits(&Matrix::from_vec(t, v, logits))
}

fn random_labels(rng: &mut ChaCha8Rng, max_len: usize, classes: usize) -> Result<LabelSequence> {
    let u = rng.random_range(0..=max_len);
    LabelSequence::new((0..u).map(|_| rng.random_range(1..=classes)).collect())
}

/// Forward-backward CTC loss against path enumeration, T ≤ 6, V ≤ 4, U ≤ 3.
pub fn ctc_oracle_suite(trials: usize, seed: u64) -> SuiteReport {
    let mut tr = Tracker::new("ctc-oracle", ORACLE_TOLERANCE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..trials {
        let t = rng.random_range(1..=6);
        let v = rng.random_range(2..=4);
        let run = |rng: &mut ChaCha8Rng| -> Result<Option<f64>> {
            let x = random_log_probs(rng, t, v)?;
            let y = random_labels(rng, 3, v - 1)?;
            match (ctc_loss(&x, &y), ctc_brute_force(&x, &y)) {
                (Ok(r), Ok(bf)) => Ok(Some((r.loss - bf).abs())),
                (Err(Error::NoValidAlignment { .. }), Err(Error::NoValidAlignment { .. })) => Ok(None),
                (a, b) => Err(Error::InvalidArgument(format!("disagreement: {:?} vs {b:?}", a.map(|r| r.loss)))),
            }
        };
        match run(&mut rng) {
            Ok(Some(e)) => tr.error(i, e),
            Ok(None) => tr.error(i, 0.0),
            Err(e) => tr.fail(i, e.to_string()),
        }
    }
    tr.finish()
}

/// CTL recurrence against subset enumeration, T ≤ 4, at most two boundary
/// labels in the alphabet, targets of length 0 to 3 with repeats.
pub fn ctl_oracle_suite(trials: usize, seed: u64) -> SuiteReport {
    let mut tr = Tracker::new("ctl-oracle", ORACLE_TOLERANCE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..trials {
        let t = rng.random_range(1..=4);
        let a = rng.random_range(1..=2);
        // every fourth instance is empty, every fourth a forced repeat
        let k = match i % 4 {
            0 => 0,
            1 => 2,
            _ => rng.random_range(0..=3),
        };
        let mut labels: Vec<usize> = (0..k).map(|_| rng.random_range(0..a)).collect();
        if i % 4 == 1 {
            labels[1] = labels[0];
        }
        let z = Matrix::from_vec(t, a, (0..t * a).map(|_| rng.random::<f64>()).collect());
        match (ctl_loss_from_boundaries(&z, &labels), ctl_brute_force_from_boundaries(&z, &labels)) {
            (Ok(r), Ok(bf)) => tr.error(i, (r.loss - bf).abs()),
            (Err(Error::UnreachableTarget), Err(Error::UnreachableTarget)) => tr.error(i, 0.0),
            (a, b) => tr.fail(i, format!("disagreement: {:?} vs {b:?}", a.map(|r| r.loss))),
        }
    }
    tr.finish()
}

pub fn ctc_grad_suite(trials: usize, seed: u64) -> SuiteReport {
    let mut tr = Tracker::new("ctc-grad", LOSS_GRAD_TOLERANCE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..trials {
        let t = rng.random_range(1..=6);
        let v = rng.random_range(2..=4);
        let r = random_log_probs(&mut rng, t, v)
            .and_then(|x| Ok((x, random_labels(&mut rng, 3, v - 1)?)))
            .and_then(|(x, y)| ctc_grad_check(&x, &y, 1e-6));
        match r {
            Ok(e) => tr.error(i, e),
            Err(Error::NoValidAlignment { .. }) => {}
            Err(e) => tr.fail(i, e.to_string()),
        }
    }
    tr.finish()
}

/// CTL gradient with respect to event probabilities, both label modes,
/// entries near a rectifier kink excluded.
pub fn ctl_grad_suite(trials: usize, seed: u64, mutate: bool) -> SuiteReport {
    let mut tr = Tracker::new("ctl-grad", LOSS_GRAD_TOLERANCE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loss = |y: &EventProbs, t: &CtlTarget| {
        let mut r = ctl_loss(y, t)?;
        if mutate {
            r.grad.scale(-1.0);
        }
        Ok(r)
    };
    for i in 0..trials {
        let mode = if i % 2 == 0 { LabelMode::OnsetOnly } else { LabelMode::Boundary };
        let (t, e) = (rng.random_range(2..=4), rng.random_range(1..=2));
        let y = Matrix::from_vec(t, e, (0..t * e).map(|_| rng.random_range(0.05..0.95)).collect());
        let k = rng.random_range(1..=2);
        let labels = (0..k).map(|_| rng.random_range(0..mode.alphabet_size(e))).collect();
        let r = EventProbs::new(y).and_then(|y| ctl_grad_check_with(&y, &CtlTarget { labels, mode }, 1e-6, loss));
        match r {
            Ok((err, compared)) if compared > 0 => tr.error(i, err),
            Ok(_) | Err(Error::UnreachableTarget) => {}
            Err(e) => tr.fail(i, e.to_string()),
        }
    }
    tr.finish()
}

/// A model small enough for finite differences over every parameter.
pub fn tiny_model_config(mode: HeadMode, cell: CellKind) -> ModelConfig {
    ModelConfig {
        feat_dim: 4,
        stack_width: 2,
        stack_stride: 1,
        conv: vec![
            ConvSpec {
                kernel: [3, 2, 1],
                stride: [2, 1, 1],
                out_channels: 2,
            },
            ConvSpec {
                kernel: [2, 2, 1],
                stride: [1, 2, 1],
                out_channels: 2,
            },
        ],
        conv_activation: Activation::Tanh,
        cell,
        hidden: [3, 3, 3],
        slot_reduction: 2,
        intent_reduction: 2,
        slot_projection: 3,
        intent_projection: 3,
        slot_vocab: 2,
        intent_vocab: 2,
        head_mode: mode,
        aux_vocab: 0,
    }
}

fn random_features(rng: &mut ChaCha8Rng, t: usize, d: usize) -> Result<FeatureMatrix> {
    let rows: Vec<Vec<f64>> = (0..t).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    FeatureMatrix::from_rows(&rows)
}

/// Back-propagation through the whole model against central differences,
/// for every loss kind on both cell types.
pub fn network_grad_suite(seed: u64) -> SuiteReport {
    let mut tr = Tracker::new("network-grad", NETWORK_GRAD_TOLERANCE);
    let mut i = 0;
    for kind in LossKind::ALL {
        for cell in [CellKind::Lstm, CellKind::Gru] {
            let run = || -> Result<f64> {
                let cfg = tiny_model_config(kind.head_mode(), cell);
                let net = Network::new(cfg.clone())?;
                let s = seed.wrapping_add(i as u64);
                let p = net.init_params(s);
                let raw = random_features(&mut ChaCha8Rng::seed_from_u64(s), 30, cfg.feat_dim)?;
                let x = stack_frames(&raw, cfg.stack_width, cfg.stack_stride)?;
                let (intents, slots) = (LabelSequence::new(vec![2, 1])?, LabelSequence::new(vec![1, 2, 1])?);
                let targets = Targets {
                    intents: &intents,
                    slots: &slots,
                };
                let gc = network_grad_check(&net, &p, &x, targets, &Objective::new(kind), 1e-4, 1e-8)?;
                if gc.compared == 0 {
                    return Err(Error::InvalidArgument("no parameters compared".into()));
                }
                Ok(gc.max_rel_error)
            };
            match run() {
                Ok(e) => tr.error(i, e),
                Err(e) => tr.fail(i, format!("{kind} {cell:?}: {e}")),
            }
            i += 1;
        }
    }
    tr.finish()
}

/// Chunked streaming decode against single-shot decode on random inputs,
/// for both head modes. Weights are scaled up so that events occur.
pub fn prefix_suite(utterances: usize, seed: u64) -> SuiteReport {
    let mut tr = Tracker::new("prefix", 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..utterances {
        let mode = if i % 2 == 0 { HeadMode::Ctc } else { HeadMode::Ctl };
        let run = |rng: &mut ChaCha8Rng| -> Result<usize> {
            let net = Network::new(ModelConfig {
                head_mode: mode,
                ..ModelConfig::default()
            })?;
            let mut p = net.init_params(rng.random());
            p.as_mut_slice().iter_mut().for_each(|v| *v *= 6.0);
            let len = rng.random_range(net.config().min_raw_len()..600);
            let raw = random_features(rng, len, net.config().feat_dim)?;
            let single = decode_utterance(&net, &p, &raw, None, 0.2)?;
            let mut mismatches = 0;
            for chunk in PREFIX_CHUNKS.into_iter().chain([len]) {
                if stream_decode(&net, &p, &raw, chunk, None, 0.2)? != single {
                    mismatches += 1;
                }
            }
            Ok(mismatches)
        };
        match run(&mut rng) {
            Ok(m) => tr.error(i, m as f64),
            Err(e) => tr.fail(i, e.to_string()),
        }
    }
    tr.finish()
}

pub fn run_verify(opts: &VerifyOptions) -> VerifyReport {
    let s = opts.seed;
    VerifyReport {
        suites: vec![
            ctc_oracle_suite(opts.oracle_trials, s),
            ctl_oracle_suite(opts.oracle_trials, s.wrapping_add(1)),
            ctc_grad_suite(opts.grad_trials, s.wrapping_add(2)),
            ctl_grad_suite(opts.grad_trials, s.wrapping_add(3), opts.mutate_ctl),
            network_grad_suite(s.wrapping_add(4)),
            prefix_suite(opts.stream_utterances, s.wrapping_add(5)),
        ],
    }
}
