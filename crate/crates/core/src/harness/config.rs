//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ctl::LabelMode;
use crate::decoder::DEFAULT_THETA;
use crate::error::{Error, Result};
use crate::network::ModelConfig;
use crate::objective::{LossKind, Objective};
use crate::synthdata::CorpusSpec;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Adam with decoupled weight decay.
    #[default]
    Adamw,
    /// Per-parameter RMS scaling without a first-moment average, decoupled
    /// weight decay.
    Rmsprop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Global gradient-norm clip; zero disables clipping.
    pub clip: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adamw,
            lr: 1e-4,
            weight_decay: 0.2,
            dropout: 0.1,
            clip: 0.0,
        }
    }
}

/// Where corpora and outputs live. Relative paths resolve against the
/// config file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub loss: LossKind,
    /// Weight of the last-step cross entropy; only valid with `+ce` losses.
    pub ce_weight: Option<f64>,
    /// Weight of the MIL term; only valid with `ctl+mil`.
    pub mil_weight: Option<f64>,
    pub ctl_mode: LabelMode,
    pub pretrain_layer1: bool,
    pub pretrain_epochs: usize,
    /// Commands per training utterance, 1 or 2.
    pub train_labels: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub theta: f64,
    /// Single-threaded, wall-clock-free run whose metrics are reproducible.
    pub deterministic: bool,
    /// Evaluate the validation split every this many epochs (and always at
    /// the last one). Zero disables per-epoch validation.
    pub eval_every: usize,
    /// Train/valid/test fractions of the speakers, used by `gen`.
    pub split: [f64; 3],
    pub optimizer: OptimizerConfig,
    pub model: ModelConfig,
    pub corpus: CorpusSpec,
    pub paths: PathsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::CtcCe,
            ce_weight: None,
            mil_weight: None,
            ctl_mode: LabelMode::OnsetOnly,
            pretrain_layer1: false,
            pretrain_epochs: 10,
            train_labels: 1,
            epochs: 50,
            batch_size: 64,
            seed: 0,
            theta: DEFAULT_THETA,
            deterministic: false,
            eval_every: 1,
            split: [0.6, 0.2, 0.2],
            optimizer: OptimizerConfig::default(),
            model: ModelConfig::default(),
            corpus: CorpusSpec::default(),
            paths: PathsConfig::default(),
        }
    }
}

fn unit(name: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(w) if !(0.0..=1.0).contains(&w) => Err(Error::Config(format!("{name} must be in [0, 1], got {w}"))),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config and resolves its relative paths against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.data_dir, &mut cfg.paths.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.ce_weight.is_some() && !self.loss.uses_ce() {
            return Err(Error::Config(format!("ce_weight is only valid with a +ce loss, not {}", self.loss)));
        }
        if self.mil_weight.is_some() && !self.loss.uses_mil() {
            return Err(Error::Config(format!("mil_weight is only valid with ctl+mil, not {}", self.loss)));
        }
        unit("ce_weight", self.ce_weight)?;
        unit("mil_weight", self.mil_weight)?;
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(1..=2).contains(&self.train_labels) {
            return Err(Error::Config("train_labels must be 1 or 2".into()));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!("theta must be in (0, 1), got {}", self.theta)));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0) || !(o.weight_decay >= 0.0) || !(0.0..1.0).contains(&o.dropout) || !(o.clip >= 0.0) {
            return Err(Error::Config(format!("bad optimizer settings {o:?}")));
        }
        crate::synthdata::split_counts(self.corpus.speakers, &self.split).map_err(|e| Error::Config(e.to_string()))?;
        self.corpus.validate()?;
        self.model_config().validate()
    }

    pub fn objective(&self) -> Objective {
        let mut obj = Objective::new(self.loss);
        if let Some(w) = self.ce_weight {
            obj.ce_weight = w;
        }
        if let Some(w) = self.mil_weight {
            obj.mil_weight = w;
        }
        obj.ctl_mode = self.ctl_mode;
        obj
    }

    /// The model section with head mode, vocabularies and feature size taken
    /// from the loss and the corpus.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            feat_dim: self.corpus.feat_dim,
            head_mode: self.loss.head_mode(),
            slot_vocab: self.corpus.n_slots,
            intent_vocab: self.corpus.n_intents,
            aux_vocab: if self.pretrain_layer1 { self.corpus.aux_vocab() } else { 0 },
            ..self.model.clone()
        }
    }

    pub fn manifest(&self, labels: usize, split: &str) -> PathBuf {
        self.paths.data_dir.join(manifest_name(labels, split))
    }
}

pub fn manifest_name(labels: usize, split: &str) -> String {
    format!("m{labels}-{split}.jsonl")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn loss_specific_weights_are_checked() {
        let err = ExperimentConfig::from_toml("loss = \"ctl\"\nmil_weight = 0.3\n");
        assert!(matches!(err, Err(Error::Config(_))));
        let err = ExperimentConfig::from_toml("loss = \"ctc\"\nce_weight = 0.3\n");
        assert!(matches!(err, Err(Error::Config(_))));
        let ok = ExperimentConfig::from_toml("loss = \"ctl+mil\"\nmil_weight = 0.3\n").unwrap();
        assert_eq!(ok.objective().mil_weight, 0.3);
        assert!(ExperimentConfig::from_toml("loss = \"ctc+ce\"\nce_weight = 1.5\n").is_err());
    }

    #[test]
    fn unknown_keys_and_kinds_are_rejected() {
        assert!(ExperimentConfig::from_toml("loss = \"mse\"\n").is_err());
        assert!(ExperimentConfig::from_toml("epoch = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("epochs = 0\n").is_err());
    }

    #[test]
    fn model_follows_loss_and_corpus() {
        let cfg = ExperimentConfig::from_toml("loss = \"ctl+ce\"\npretrain_layer1 = true\n[corpus]\nn_intents = 6\n").unwrap();
        let m = cfg.model_config();
        assert_eq!(m.head_mode, crate::network::HeadMode::Ctl);
        assert_eq!((m.intent_vocab, m.slot_vocab, m.aux_vocab), (6, 8, 18));
    }
}
