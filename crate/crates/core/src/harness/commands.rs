//! The operations behind each CLI subcommand.

use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;

use super::config::{manifest_name, ExperimentConfig};
use super::eval::{evaluate, Model, Predictor};
use super::metrics::{Cell, MetricsRecord, MetricsWriter};
use super::train::{train, TrainOutcome};
use super::verify::{run_verify, VerifyOptions, VerifyReport};
use crate::decoder::{write_event_log, DecodeEvent, StreamState};
use crate::error::{Error, Result};
use crate::features::{load_features, DEFAULT_CMVN_EPS};
use crate::synthdata::{generate, load_corpus, split, write_corpus, CorpusSpec, SyntheticUtterance, TemplateOracle};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CONFIG_FILE: &str = "experiment.toml";
pub const SPLITS: [&str; 3] = ["train", "valid", "test"];

/// Corpus spec for the `labels`-command corpus. Both corpora share the
/// templates and speakers but draw different utterances.
pub fn corpus_spec(cfg: &ExperimentConfig, labels: usize) -> CorpusSpec {
    CorpusSpec {
        labels_per_utterance: labels,
        seed: cfg.corpus.seed.wrapping_add(labels as u64 - 1),
        ..cfg.corpus.clone()
    }
}

/// Generates the one- and two-command corpora, splits each by speaker and
/// writes six manifests under the data directory. Returns their paths.
pub fn cmd_gen(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for labels in [1, 2] {
        let corpus = generate(&corpus_spec(cfg, labels))?;
        // same split seed for both corpora keeps the speaker partition shared
        let parts = split(&corpus, cfg.split, cfg.corpus.seed)?;
        for (name, part) in SPLITS.iter().zip([&parts.train, &parts.valid, &parts.test]) {
            let path = write_corpus(&cfg.paths.data_dir, &manifest_name(labels, name), part)?;
            info!("wrote {} ({} utterances)", path.display(), part.len());
            out.push(path);
        }
    }
    Ok(out)
}

pub fn load_split(cfg: &ExperimentConfig, labels: usize, split: &str) -> Result<Vec<SyntheticUtterance>> {
    let path = cfg.manifest(labels, split);
    if !path.exists() {
        return Err(Error::Config(format!(
            "missing corpus manifest {} (run `gen` first)",
            path.display()
        )));
    }
    load_corpus(&path)
}

fn test_record(cfg: &ExperimentConfig, test_labels: usize, epoch: usize, acc: super::metrics::Accuracy) -> MetricsRecord {
    MetricsRecord {
        cell: Cell {
            train_labels: cfg.train_labels,
            test_labels: Some(test_labels),
            loss: cfg.loss,
            pretrain: cfg.pretrain_layer1,
        },
        seed: cfg.seed,
        epoch,
        split: "test".into(),
        utterances: acc.total,
        intent_acc: Some(acc.intent_rate()),
        slot_acc: Some(acc.slot_rate()),
        joint_acc: Some(acc.joint_rate()),
        mean_loss: None,
        wall_time: None,
    }
}

/// Trains under `cfg`, saving the model, its CMVN statistics, the resolved
/// config and a metrics stream to the output directory. Afterwards every
/// available test split is evaluated and appended to the stream.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    let train_set = load_split(cfg, cfg.train_labels, "train")?;
    let valid_set = load_split(cfg, cfg.train_labels, "valid")?;
    let out = &cfg.paths.out_dir;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(CONFIG_FILE), cfg.to_toml()?)?;
    let metrics_path = out.join(METRICS_FILE);
    let mut writer = MetricsWriter::create(&metrics_path)?;
    let mut outcome = train(cfg, &train_set, &valid_set, |r| writer.write(r))?;
    let model = Model {
        net: outcome.net.clone(),
        params: outcome.params.clone(),
        cmvn: outcome.cmvn.clone(),
        theta: cfg.theta,
    };
    model.save(out)?;
    // evaluate what was saved, not the in-memory weights
    let saved = Model::load(out, cfg.model_config(), cfg.theta)?;
    for labels in [1, 2] {
        if !cfg.manifest(labels, "test").exists() {
            continue;
        }
        let acc = evaluate(&saved, &load_split(cfg, labels, "test")?, cfg.deterministic)?;
        let r = test_record(cfg, labels, cfg.epochs, acc);
        info!(
            "test m{labels}: intent {:.3} slot {:.3} joint {:.3}",
            acc.intent_rate(),
            acc.slot_rate(),
            acc.joint_rate()
        );
        writer.write(&r)?;
        outcome.records.push(r);
    }
    Ok(outcome)
}

/// Which predictor `eval` scores.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalTarget {
    /// The checkpoint in this directory.
    Checkpoint(PathBuf),
    /// The nearest-template classifier.
    Oracle,
}

/// Scores a predictor on the `test_labels` test split.
pub fn cmd_eval(cfg: &ExperimentConfig, target: &EvalTarget, test_labels: usize) -> Result<MetricsRecord> {
    let test = load_split(cfg, test_labels, "test")?;
    let predictor: Box<dyn Predictor> = match target {
        EvalTarget::Checkpoint(dir) => Box::new(Model::load(dir, cfg.model_config(), cfg.theta)?),
        EvalTarget::Oracle => Box::new(TemplateOracle::new(&corpus_spec(cfg, test_labels))?),
    };
    let acc = evaluate(predictor.as_ref(), &test, cfg.deterministic)?;
    Ok(test_record(cfg, test_labels, cfg.epochs, acc))
}

/// Streams one feature file through a trained model in chunks, writing each
/// event as soon as it is decoded. Returns all events.
pub fn cmd_stream<W: Write>(
    cfg: &ExperimentConfig,
    model_dir: &Path,
    utterance: &Path,
    chunk: usize,
    mut log: W,
) -> Result<Vec<DecodeEvent>> {
    if chunk == 0 {
        return Err(Error::InvalidArgument("chunk size must be >= 1".into()));
    }
    let model = Model::load(model_dir, cfg.model_config(), cfg.theta)?;
    let raw = load_features(utterance)?;
    let session = utterance.file_stem().and_then(|s| s.to_str()).unwrap_or("stream");
    let mut state = StreamState::new(&model.net, &model.params, cfg.theta)?.with_cmvn(model.cmvn.clone(), DEFAULT_CMVN_EPS)?;
    let mut all = Vec::new();
    for c in raw.chunks(chunk) {
        let ev = state.push(&c)?;
        write_event_log(&mut log, session, &ev)?;
        log.flush()?;
        all.extend(ev);
    }
    let ev = state.finish()?;
    write_event_log(&mut log, session, &ev)?;
    log.flush()?;
    all.extend(ev);
    Ok(all)
}

pub fn cmd_verify(opts: &VerifyOptions) -> VerifyReport {
    run_verify(opts)
}

/// Appends `records` to the metrics stream in `dir`.
pub fn append_metrics(dir: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = MetricsWriter::append(&dir.join(METRICS_FILE))?;
    records.iter().try_for_each(|r| w.write(r))
}
