//! Mini-batch training with optional layer-1 pretraining.

use std::time::Instant;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::eval::{evaluate_model, ModelEval};
use super::metrics::{Cell, MetricsRecord};
use super::optim::Optimizer;
use crate::ctc::{collapse_path, ctc_loss, FrameLogProbs, LabelSequence};
use crate::error::{Error, Result};
use crate::features::{accumulate_cmvn, apply_cmvn, stack_frames, CmvnStats, FeatureMatrix, DEFAULT_CMVN_EPS};
use crate::network::{Depth, ForwardOptions, HeadGrads, ModelParams, Network};
use crate::objective::{loss_and_grad, Objective, Targets};
use crate::synthdata::SyntheticUtterance;

/// A normalized, stacked training utterance.
#[derive(Clone, Debug)]
pub struct Example {
    pub id: String,
    pub stacked: FeatureMatrix,
    pub intents: LabelSequence,
    pub slots: LabelSequence,
    /// Collapsed frame targets for the layer-1 auxiliary head.
    pub aux: LabelSequence,
}

pub fn prepare(net: &Network, corpus: &[SyntheticUtterance], cmvn: &CmvnStats) -> Result<Vec<Example>> {
    let cfg = net.config();
    corpus
        .iter()
        .map(|u| {
            let x = apply_cmvn(&u.features, cmvn, DEFAULT_CMVN_EPS)?;
            Ok(Example {
                id: u.id.clone(),
                stacked: stack_frames(&x, cfg.stack_width, cfg.stack_stride)?,
                intents: u.intent_labels.clone(),
                slots: u.slot_labels.clone(),
                aux: LabelSequence::new(collapse_path(&u.frame_targets))?,
            })
        })
        .collect()
}

/// What a finished run hands back.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub net: Network,
    pub params: ModelParams,
    pub cmvn: CmvnStats,
    pub records: Vec<MetricsRecord>,
    /// Utterances skipped at least once because their targets cannot be
    /// aligned to the model's output length.
    pub skipped: usize,
}

/// Mixes run seed, epoch and position into a dropout mask seed.
fn mask_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    let mut z = seed ^ ((epoch as u64) << 40) ^ index as u64;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn infeasible(e: &Error) -> bool {
    matches!(e, Error::NoValidAlignment { .. } | Error::UnreachableTarget)
}

struct Batch {
    loss: f64,
    grad: Vec<f64>,
    used: usize,
    skipped: Vec<usize>,
}

/// Evaluates `f` on each index (in parallel unless `serial`) and reduces
/// the results in index order.
fn run_batch<F>(indices: &[usize], len: usize, serial: bool, f: F) -> Result<Batch>
where
    F: Fn(usize) -> Result<(f64, Vec<f64>)> + Sync,
{
    let results: Vec<Result<(f64, Vec<f64>)>> = if serial {
        indices.iter().map(|&i| f(i)).collect()
    } else {
        indices.par_iter().map(|&i| f(i)).collect()
    };
    let mut out = Batch {
        loss: 0.0,
        grad: vec![0.0; len],
        used: 0,
        skipped: Vec::new(),
    };
    for (&i, r) in indices.iter().zip(results) {
        match r {
            Ok((l, g)) => {
                out.loss += l;
                for (a, b) in out.grad.iter_mut().zip(&g) {
                    *a += b;
                }
                out.used += 1;
            }
            Err(e) if infeasible(&e) => out.skipped.push(i),
            Err(e) => return Err(e),
        }
    }
    if out.used > 0 {
        let k = 1.0 / out.used as f64;
        out.grad.iter_mut().for_each(|g| *g *= k);
    }
    Ok(out)
}

pub struct Trainer<'a> {
    cfg: &'a ExperimentConfig,
    net: Network,
    obj: Objective,
    start: Instant,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            net: Network::new(cfg.model_config())?,
            obj: cfg.objective(),
            start: Instant::now(),
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    fn cell(&self) -> Cell {
        Cell {
            train_labels: self.cfg.train_labels,
            test_labels: None,
            loss: self.cfg.loss,
            pretrain: self.cfg.pretrain_layer1,
        }
    }

    fn record(&self, epoch: usize, split: &str, utterances: usize) -> MetricsRecord {
        MetricsRecord {
            cell: self.cell(),
            seed: self.cfg.seed,
            epoch,
            split: split.into(),
            utterances,
            intent_acc: None,
            slot_acc: None,
            joint_acc: None,
            mean_loss: None,
            wall_time: (!self.cfg.deterministic).then(|| self.start.elapsed().as_secs_f64()),
        }
    }

    fn batches(&self, n: usize, epoch: usize, salt: u64) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ salt);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        order.chunks(self.cfg.batch_size).map(<[usize]>::to_vec).collect()
    }

    /// Trains on `train`, validating on `valid`, and passes every record to
    /// `sink` as soon as it is produced.
    pub fn run(
        self,
        train: &[SyntheticUtterance],
        valid: &[SyntheticUtterance],
        mut sink: impl FnMut(&MetricsRecord) -> Result<()>,
    ) -> Result<TrainOutcome> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("training split is empty".into()));
        }
        let cfg = self.cfg;
        let cmvn = accumulate_cmvn(train.iter().map(|u| &u.features))?;
        let examples = prepare(&self.net, train, &cmvn)?;
        let mut params = self.net.init_params(cfg.seed);
        let mut records = Vec::new();
        let mut emit = |r: MetricsRecord, records: &mut Vec<MetricsRecord>| -> Result<()> {
            sink(&r)?;
            records.push(r);
            Ok(())
        };
        let mut ever_skipped = vec![false; examples.len()];
        let serial = cfg.deterministic;
        let n_params = params.len();

        if cfg.pretrain_layer1 {
            let layer1 = self.net.layer1_blocks();
            let mut mask = vec![false; n_params];
            for &b in &layer1 {
                mask[self.net.layout().info(b).range()].iter_mut().for_each(|m| *m = true);
            }
            let mut opt = Optimizer::new(cfg.optimizer.clone(), n_params).with_trainable(mask);
            for epoch in 1..=cfg.pretrain_epochs {
                let (mut sum, mut used) = (0.0, 0);
                for batch in self.batches(examples.len(), epoch, 0x5052_4554) {
                    let b = run_batch(&batch, n_params, serial, |i| self.aux_loss_and_grad(&params, &examples[i]))?;
                    for i in b.skipped {
                        ever_skipped[i] = true;
                    }
                    if b.used > 0 {
                        opt.update(params.as_mut_slice(), &b.grad);
                    }
                    sum += b.loss;
                    used += b.used;
                }
                let mut r = self.record(epoch, "pretrain", used);
                r.mean_loss = Some(sum / used.max(1) as f64);
                info!("pretrain epoch {epoch}: aux loss {:.4}", r.mean_loss.unwrap_or(f64::NAN));
                emit(r, &mut records)?;
            }
        }

        let freeze = cfg.pretrain_layer1;
        let mut mask = vec![true; n_params];
        if freeze {
            for b in self.net.layer1_blocks() {
                mask[self.net.layout().info(b).range()].iter_mut().for_each(|m| *m = false);
            }
        }
        let mut opt = Optimizer::new(cfg.optimizer.clone(), n_params).with_trainable(mask);
        for epoch in 1..=cfg.epochs {
            let (mut sum, mut used) = (0.0, 0);
            let mut norms = Vec::new();
            for batch in self.batches(examples.len(), epoch, 0) {
                let b = run_batch(&batch, n_params, serial, |i| {
                    let ex = &examples[i];
                    let opts = ForwardOptions {
                        dropout: cfg.optimizer.dropout,
                        mask_seed: mask_seed(cfg.seed, epoch, i),
                        freeze_layer1: freeze,
                        depth: Depth::Full,
                    };
                    let targets = Targets {
                        intents: &ex.intents,
                        slots: &ex.slots,
                    };
                    let (l, g) = loss_and_grad(&self.net, &params, &ex.stacked, targets, &self.obj, opts)?;
                    Ok((l.total, g))
                })?;
                for i in b.skipped {
                    if !ever_skipped[i] {
                        warn!("skipping {}: targets do not fit the output length", examples[i].id);
                    }
                    ever_skipped[i] = true;
                }
                if b.used > 0 {
                    norms.push(opt.update(params.as_mut_slice(), &b.grad));
                }
                sum += b.loss;
                used += b.used;
            }
            norms.sort_by(f64::total_cmp);
            if let (Some(lo), Some(hi)) = (norms.first(), norms.last()) {
                debug!("epoch {epoch}: gradient norm min {lo:.3e} median {:.3e} max {hi:.3e}", norms[norms.len() / 2]);
            }
            if !params.is_finite() {
                return Err(Error::InvalidArgument(format!("parameters diverged at epoch {epoch}")));
            }
            let mut r = self.record(epoch, "train", used);
            r.mean_loss = Some(sum / used.max(1) as f64);
            info!("epoch {epoch}: train loss {:.4}", r.mean_loss.unwrap_or(f64::NAN));
            emit(r, &mut records)?;
            let due = cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
            if due && !valid.is_empty() {
                let ev = evaluate_model(&self.net, &params, &cmvn, &self.obj, cfg.theta, valid, serial)?;
                let r = self.eval_record(epoch, "valid", &ev);
                info!(
                    "epoch {epoch}: valid intent {:.3} slot {:.3} joint {:.3}",
                    ev.acc.intent_rate(),
                    ev.acc.slot_rate(),
                    ev.acc.joint_rate()
                );
                emit(r, &mut records)?;
            }
        }
        Ok(TrainOutcome {
            net: self.net,
            params,
            cmvn,
            records,
            skipped: ever_skipped.iter().filter(|&&s| s).count(),
        })
    }

    fn eval_record(&self, epoch: usize, split: &str, ev: &ModelEval) -> MetricsRecord {
        let mut r = self.record(epoch, split, ev.acc.total);
        r.cell.test_labels = Some(self.cfg.train_labels);
        r.intent_acc = Some(ev.acc.intent_rate());
        r.slot_acc = Some(ev.acc.slot_rate());
        r.joint_acc = Some(ev.acc.joint_rate());
        r.mean_loss = ev.mean_loss;
        r
    }

    fn aux_loss_and_grad(&self, params: &ModelParams, ex: &Example) -> Result<(f64, Vec<f64>)> {
        let opts = ForwardOptions {
            depth: Depth::Layer1,
            ..ForwardOptions::default()
        };
        let fwd = self.net.forward_train(params, &ex.stacked, opts)?;
        let logits = fwd
            .aux_logits()
            .ok_or_else(|| Error::Config("pretraining needs an auxiliary head".into()))?;
        let r = ctc_loss(&FrameLogProbs::from_logits(logits)?, &ex.aux)?;
        let grads = HeadGrads {
            aux_logits: Some(r.grad),
            ..HeadGrads::default()
        };
        Ok((r.loss, self.net.backward(&fwd, grads)?))
    }
}

/// Convenience wrapper around [`Trainer`].
pub fn train(
    cfg: &ExperimentConfig,
    train: &[SyntheticUtterance],
    valid: &[SyntheticUtterance],
    sink: impl FnMut(&MetricsRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    Trainer::new(cfg)?.run(train, valid, sink)
}
