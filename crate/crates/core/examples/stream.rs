//! Streams a two-command utterance through a model in 10-frame chunks and
//! prints each event as soon as the decoder emits it, then checks that the
//! result equals a single-shot decode. Trains a small model first.

use streamslu::decoder::{decode_utterance, StreamState};
use streamslu::features::DEFAULT_CMVN_EPS;
use streamslu::harness::{train, ExperimentConfig};
use streamslu::synthdata::{generate, split, CorpusSpec};

fn main() -> streamslu::Result<()> {
    let mut cfg = ExperimentConfig {
        train_labels: 2,
        epochs: 12,
        batch_size: 1,
        eval_every: 0,
        corpus: CorpusSpec {
            size: 120,
            labels_per_utterance: 2,
            ..CorpusSpec::default()
        },
        ..ExperimentConfig::default()
    };
    cfg.optimizer.lr = 1e-3;
    cfg.optimizer.clip = 1.0;
    let corpus = generate(&cfg.corpus)?;
    let parts = split(&corpus, cfg.split, 0)?;
    eprintln!("training on {} utterances...", parts.train.len());
    let out = train(&cfg, &parts.train, &[], |_| Ok(()))?;

    let u = &parts.test[0];
    println!(
        "utterance {}: {} frames, truth intents {:?} slots {:?}",
        u.id,
        u.features.frame_count(),
        u.intent_labels.labels(),
        u.slot_labels.labels()
    );
    let mut s = StreamState::new(&out.net, &out.params, cfg.theta)?.with_cmvn(out.cmvn.clone(), DEFAULT_CMVN_EPS)?;
    let mut fed = 0;
    for chunk in u.features.chunks(10) {
        fed += chunk.frame_count();
        for e in s.push(&chunk)? {
            println!("  after {fed:>4} frames: {:?} label {} (score {:.3})", e.head, e.label, e.score);
        }
    }
    for e in s.finish()? {
        println!("  at end of input: {:?} label {} (score {:.3})", e.head, e.label, e.score);
    }
    let streamed = s.result();
    let single = decode_utterance(&out.net, &out.params, &u.features, Some((&out.cmvn, DEFAULT_CMVN_EPS)), cfg.theta)?;
    println!(
        "decoded intents {:?} slots {:?}; identical to single-shot: {}",
        streamed.intents.labels(),
        streamed.slots.labels(),
        streamed == single
    );
    Ok(())
}
