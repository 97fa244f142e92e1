//! Trains the default model on a small in-memory corpus and prints the
//! metrics stream. Pass a loss kind (ctc, ctl, ctc+ce, ctl+ce, ctl+mil) as
//! the first argument; `--pretrain` adds layer-1 pretraining.
//!
//! cargo run --release --example train -- ctl+mil --pretrain

use streamslu::harness::{evaluate, train, ExperimentConfig, Model};
use streamslu::objective::LossKind;
use streamslu::synthdata::{generate, split, CorpusSpec};

fn main() -> streamslu::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let loss: LossKind = args.first().map(|s| s.parse()).transpose()?.unwrap_or(LossKind::CtcCe);
    let mut cfg = ExperimentConfig {
        loss,
        pretrain_layer1: args.iter().any(|a| a == "--pretrain"),
        pretrain_epochs: 3,
        epochs: 15,
        batch_size: 1,
        eval_every: 5,
        corpus: CorpusSpec {
            size: 150,
            ..CorpusSpec::default()
        },
        ..ExperimentConfig::default()
    };
    cfg.optimizer.lr = 1e-3;
    cfg.optimizer.clip = 1.0;

    let corpus = generate(&cfg.corpus)?;
    let parts = split(&corpus, cfg.split, 0)?;
    let out = train(&cfg, &parts.train, &parts.valid, |r| {
        println!("{}", serde_json::to_string(r)?);
        Ok(())
    })?;
    let model = Model {
        net: out.net,
        params: out.params,
        cmvn: out.cmvn,
        theta: cfg.theta,
    };
    let acc = evaluate(&model, &parts.test, false)?;
    println!(
        "{loss} on {} held-out speakers' utterances: intent {:.3} slot {:.3} joint {:.3}",
        acc.total,
        acc.intent_rate(),
        acc.slot_rate(),
        acc.joint_rate()
    );
    Ok(())
}
