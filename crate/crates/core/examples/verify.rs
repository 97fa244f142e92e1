//! Runs the self-check suites at reduced size, then again with a sign error
//! injected into the CTL gradient.

use streamslu::harness::{run_verify, VerifyOptions};

fn main() {
    let opts = VerifyOptions {
        oracle_trials: 200,
        grad_trials: 30,
        stream_utterances: 4,
        ..VerifyOptions::default()
    };
    println!("{}\n", run_verify(&opts));
    let mutated = run_verify(&VerifyOptions { mutate_ctl: true, ..opts });
    println!("with mutation: failing suites {:?}", mutated.failing());
}
