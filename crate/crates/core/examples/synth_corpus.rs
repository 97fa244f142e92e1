//! Generates one- and two-command corpora, splits them by speaker and scores
//! the nearest-template classifier on each.

use streamslu::harness::evaluate;
use streamslu::synthdata::{generate, split, CorpusSpec, TemplateOracle};

fn main() -> streamslu::Result<()> {
    for labels in [1, 2] {
        let spec = CorpusSpec {
            size: 60,
            labels_per_utterance: labels,
            ..CorpusSpec::default()
        };
        let corpus = generate(&spec)?;
        let parts = split(&corpus, [0.6, 0.2, 0.2], 0)?;
        let u = &corpus[0];
        println!(
            "{labels}-command corpus: {} utterances, first has {} frames, intents {:?}, slots {:?}",
            corpus.len(),
            u.features.frame_count(),
            u.intent_labels.labels(),
            u.slot_labels.labels()
        );
        println!(
            "  split {} / {} / {} utterances",
            parts.train.len(),
            parts.valid.len(),
            parts.test.len()
        );
        let oracle = TemplateOracle::new(&spec)?;
        let acc = evaluate(&oracle, &corpus, false)?;
        println!(
            "  template oracle: intent {:.3} slot {:.3} joint {:.3}",
            acc.intent_rate(),
            acc.slot_rate(),
            acc.joint_rate()
        );
    }
    Ok(())
}
