//! End-to-end checks of the harness commands on small corpora.

mod common;

use std::collections::BTreeSet;
use std::path::Path;

use streamslu::decoder::{decode_utterance, Head};
use streamslu::features::{save_features, FeatureMatrix, DEFAULT_CMVN_EPS};
use streamslu::harness::commands::{load_split, METRICS_FILE};
use streamslu::harness::{
    cmd_eval, cmd_gen, cmd_stream, cmd_train, read_metrics, EvalTarget, ExperimentConfig, Model,
};
use streamslu::network::Network;
use streamslu::objective::LossKind;
use streamslu::Error;

fn small_config(dir: &Path, size: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.corpus.size = size;
    cfg.paths.data_dir = dir.join("data");
    cfg.paths.out_dir = dir.join("run");
    cfg.batch_size = 1;
    cfg.optimizer.lr = 1e-3;
    cfg.optimizer.clip = 1.0;
    cfg
}

#[test]
fn gen_writes_speaker_disjoint_splits_shared_by_both_corpora() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 60);
    let paths = cmd_gen(&cfg).unwrap();
    assert_eq!(paths.len(), 6);
    let speakers = |labels, split| -> BTreeSet<usize> {
        load_split(&cfg, labels, split).unwrap().iter().map(|u| u.speaker).collect()
    };
    for labels in [1, 2] {
        let (tr, va, te) = (speakers(labels, "train"), speakers(labels, "valid"), speakers(labels, "test"));
        assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
    }
    for split in ["train", "valid", "test"] {
        assert_eq!(speakers(1, split), speakers(2, split), "{split}");
    }
    for u in load_split(&cfg, 2, "test").unwrap() {
        assert_eq!(u.intent_labels.len(), 2);
        assert_eq!(u.slot_labels.len(), 2);
    }
}

#[test]
fn invalid_configs_and_missing_corpora_are_reported() {
    let err = ExperimentConfig::from_toml("loss = \"ctl\"\nmil_weight = 0.3\n").unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    let err = ExperimentConfig::from_toml("loss = \"ctc\"\nce_weight = 0.4\n").unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert!(ExperimentConfig::from_toml("epochs = 3\nbogus = 1\n").is_err());

    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 40);
    let err = cmd_train(&cfg).unwrap_err();
    assert!(err.to_string().contains("run `gen` first"), "{err}");
}

#[test]
fn deterministic_training_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), 40);
    cfg.epochs = 2;
    cfg.deterministic = true;
    cmd_gen(&cfg).unwrap();
    let mut streams = Vec::new();
    for run in ["a", "b"] {
        cfg.paths.out_dir = dir.path().join(run);
        cmd_train(&cfg).unwrap();
        streams.push(std::fs::read_to_string(cfg.paths.out_dir.join(METRICS_FILE)).unwrap());
    }
    assert_eq!(streams[0], streams[1]);
    let records = read_metrics(&dir.path().join("a").join(METRICS_FILE)).unwrap();
    assert!(records.iter().all(|r| r.wall_time.is_none()));
    // one train record per epoch, validation at the end, then both test splits
    let splits: Vec<&str> = records.iter().map(|r| r.split.as_str()).collect();
    assert_eq!(splits, ["train", "valid", "train", "valid", "test", "test"]);
    let tests: Vec<_> = records.iter().filter(|r| r.split == "test").collect();
    assert_eq!(tests[0].cell.test_labels, Some(1));
    assert_eq!(tests[1].cell.test_labels, Some(2));
    assert_eq!(tests[0].cell.loss, LossKind::CtcCe);
    assert!(!tests[0].cell.pretrain);
}

#[test]
fn ctc_ce_training_halves_the_loss() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), 120);
    cfg.epochs = 20;
    cfg.eval_every = 0;
    cmd_gen(&cfg).unwrap();
    let out = cmd_train(&cfg).unwrap();
    let losses: Vec<f64> = out
        .records
        .iter()
        .filter(|r| r.split == "train")
        .filter_map(|r| r.mean_loss)
        .collect();
    let (first, last) = (losses[0], *losses.last().unwrap());
    assert!(last <= 0.5 * first, "loss went from {first} to {last}");
}

#[test]
fn eval_scores_oracle_and_rejects_foreign_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), 60);
    cfg.corpus.noise = 0.0;
    cmd_gen(&cfg).unwrap();
    for labels in [1, 2] {
        let r = cmd_eval(&cfg, &EvalTarget::Oracle, labels).unwrap();
        assert_eq!((r.intent_acc, r.slot_acc, r.joint_acc), (Some(1.0), Some(1.0), Some(1.0)));
    }

    // an untrained model sits near chance
    let net = Network::new(cfg.model_config()).unwrap();
    let model = Model {
        params: net.init_params(3),
        net,
        cmvn: streamslu::features::accumulate_cmvn(load_split(&cfg, 1, "train").unwrap().iter().map(|u| &u.features))
            .unwrap(),
        theta: cfg.theta,
    };
    let ckpt = dir.path().join("random");
    model.save(&ckpt).unwrap();
    let r = cmd_eval(&cfg, &EvalTarget::Checkpoint(ckpt.clone()), 1).unwrap();
    let (i, s, j) = (r.intent_acc.unwrap(), r.slot_acc.unwrap(), r.joint_acc.unwrap());
    assert!(i < 0.2, "random intent accuracy {i}");
    assert!(j <= i.min(s));

    let mut other = cfg.clone();
    other.model.hidden = [16, 16, 16];
    assert!(matches!(
        cmd_eval(&other, &EvalTarget::Checkpoint(ckpt.clone()), 1),
        Err(Error::DigestMismatch)
    ));
    other = cfg.clone();
    other.loss = LossKind::Ctl;
    assert!(cmd_eval(&other, &EvalTarget::Checkpoint(ckpt), 1).is_err());
}

#[test]
fn stream_matches_single_shot_and_stays_quiet_on_silence() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), 60);
    cfg.epochs = 3;
    cfg.eval_every = 0;
    cmd_gen(&cfg).unwrap();
    cmd_train(&cfg).unwrap();
    let model = Model::load(&cfg.paths.out_dir, cfg.model_config(), cfg.theta).unwrap();

    let u = &load_split(&cfg, 2, "test").unwrap()[0];
    let input = dir.path().join("two.feat");
    save_features(&input, &u.features).unwrap();
    let single = decode_utterance(
        &model.net,
        &model.params,
        &u.features,
        Some((&model.cmvn, DEFAULT_CMVN_EPS)),
        cfg.theta,
    )
    .unwrap();
    for chunk in [1, 7, u.features.frame_count()] {
        let mut log = Vec::new();
        let events = cmd_stream(&cfg, &cfg.paths.out_dir, &input, chunk, &mut log).unwrap();
        assert_eq!(events, single.events, "chunk {chunk}");
        let lines = String::from_utf8(log).unwrap();
        assert_eq!(lines.lines().count(), events.len());
        for (line, e) in lines.lines().zip(&events) {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["session"], "two");
            assert_eq!(v["frame"], e.frame);
            assert_eq!(v["label"], e.label);
            let head = if e.head == Head::Intent { "intent" } else { "slot" };
            assert_eq!(v["head"], head);
        }
    }

    // the CMVN mean maps to zero, the most silence-like input the model sees
    let silent_frame = model.cmvn.mean.clone();
    let rows = vec![silent_frame; 200];
    let silence = dir.path().join("silence.feat");
    save_features(&silence, &FeatureMatrix::from_rows(&rows).unwrap()).unwrap();
    let mut log = Vec::new();
    let events = cmd_stream(&cfg, &cfg.paths.out_dir, &silence, 16, &mut log).unwrap();
    assert!(events.is_empty(), "{events:?}");
    assert!(log.is_empty());
}
