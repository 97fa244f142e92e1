//! Exact-match evaluation of a model or the template oracle.

use std::path::Path;

use rayon::prelude::*;

use super::metrics::Accuracy;
use crate::ctc::LabelSequence;
use crate::decoder::{decode_output, decode_utterance, sequence_accuracy};
use crate::error::{Error, Result};
use crate::features::{apply_cmvn, CmvnStats, FeatureMatrix, DEFAULT_CMVN_EPS};
use crate::network::{load_checkpoint, save_checkpoint, ModelConfig, ModelParams, Network};
use crate::objective::{utterance_loss, Objective, Targets};
use crate::synthdata::{SyntheticUtterance, TemplateOracle};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CMVN_FILE: &str = "cmvn.feat";

/// Anything that maps raw features to (intents, slots).
pub trait Predictor: Sync {
    fn predict(&self, raw: &FeatureMatrix) -> Result<(LabelSequence, LabelSequence)>;
}

impl Predictor for TemplateOracle {
    fn predict(&self, raw: &FeatureMatrix) -> Result<(LabelSequence, LabelSequence)> {
        Ok(TemplateOracle::predict(self, raw))
    }
}

/// A trained network with the normalization it was trained under.
#[derive(Clone, Debug)]
pub struct Model {
    pub net: Network,
    pub params: ModelParams,
    pub cmvn: CmvnStats,
    pub theta: f64,
}

impl Model {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        save_checkpoint(dir.join(CHECKPOINT_FILE), self.net.config(), &self.params)?;
        self.cmvn.save(dir.join(CMVN_FILE))
    }

    /// Loads a checkpoint and its CMVN statistics from `dir`, refusing a
    /// checkpoint written for a different model configuration.
    pub fn load(dir: &Path, cfg: ModelConfig, theta: f64) -> Result<Self> {
        let net = Network::new(cfg)?;
        let params = load_checkpoint(dir.join(CHECKPOINT_FILE), &net)?;
        let cmvn = CmvnStats::load(dir.join(CMVN_FILE))?;
        Ok(Self { net, params, cmvn, theta })
    }
}

impl Predictor for Model {
    fn predict(&self, raw: &FeatureMatrix) -> Result<(LabelSequence, LabelSequence)> {
        let r = decode_utterance(&self.net, &self.params, raw, Some((&self.cmvn, DEFAULT_CMVN_EPS)), self.theta)?;
        Ok((r.intents, r.slots))
    }
}

fn collect<T: Send>(corpus: &[SyntheticUtterance], serial: bool, f: impl Fn(&SyntheticUtterance) -> T + Sync + Send) -> Vec<T> {
    if serial {
        corpus.iter().map(f).collect()
    } else {
        corpus.par_iter().map(f).collect()
    }
}

pub fn evaluate(pred: &dyn Predictor, corpus: &[SyntheticUtterance], serial: bool) -> Result<Accuracy> {
    let mut acc = Accuracy::default();
    for (u, r) in corpus.iter().zip(collect(corpus, serial, |u| pred.predict(&u.features))) {
        let (i, s) = r?;
        acc.add(
            sequence_accuracy(&i, &u.intent_labels) == 1,
            sequence_accuracy(&s, &u.slot_labels) == 1,
        );
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelEval {
    pub acc: Accuracy,
    /// Mean loss over the utterances whose targets fit the output length.
    pub mean_loss: Option<f64>,
}

/// Accuracy and loss from one forward pass per utterance.
pub fn evaluate_model(
    net: &Network,
    params: &ModelParams,
    cmvn: &CmvnStats,
    obj: &Objective,
    theta: f64,
    corpus: &[SyntheticUtterance],
    serial: bool,
) -> Result<ModelEval> {
    let one = |u: &SyntheticUtterance| -> Result<(LabelSequence, LabelSequence, Option<f64>)> {
        let x = apply_cmvn(&u.features, cmvn, DEFAULT_CMVN_EPS)?;
        let out = net.forward_features(params, &x)?;
        let d = decode_output(&out, theta)?;
        let targets = Targets {
            intents: &u.intent_labels,
            slots: &u.slot_labels,
        };
        let loss = match utterance_loss(obj, &out.slot, &out.intent, targets) {
            Ok((l, _)) => Some(l.total),
            Err(Error::NoValidAlignment { .. } | Error::UnreachableTarget) => None,
            Err(e) => return Err(e),
        };
        Ok((d.intents, d.slots, loss))
    };
    let mut acc = Accuracy::default();
    let (mut sum, mut n) = (0.0, 0usize);
    for (u, r) in corpus.iter().zip(collect(corpus, serial, one)) {
        let (i, s, l) = r?;
        acc.add(i == u.intent_labels, s == u.slot_labels);
        if let Some(l) = l {
            sum += l;
            n += 1;
        }
    }
    Ok(ModelEval {
        acc,
        mean_loss: (n > 0).then(|| sum / n as f64),
    })
}
