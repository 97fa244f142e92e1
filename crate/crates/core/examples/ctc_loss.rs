//! CTC loss and gradient on a hand-sized input, checked against path
//! enumeration and finite differences.

use streamslu::ctc::{ctc_brute_force, ctc_grad_check, ctc_loss, FrameLogProbs, LabelSequence};
use streamslu::math::Matrix;

fn main() -> streamslu::Result<()> {
    // 4 frames over {blank, a, b}
    let probs = Matrix::from_rows(&[
        [0.6, 0.3, 0.1],
        [0.2, 0.7, 0.1],
        [0.5, 0.1, 0.4],
        [0.1, 0.1, 0.8],
    ]);
    let x = FrameLogProbs::from_probs(&probs)?;
    let y = LabelSequence::new(vec![1, 2])?;

    let r = ctc_loss(&x, &y)?;
    let exact = ctc_brute_force(&x, &y)?;
    println!("loss (forward-backward) = {:.12}", r.loss);
    println!("loss (all 81 paths)     = {exact:.12}");
    println!("gradient w.r.t. logits:");
    for row in r.grad.iter_rows() {
        println!("  {:>8.4?}", row);
    }
    println!("max relative error vs central differences: {:.2e}", ctc_grad_check(&x, &y, 1e-6)?);

    // a repeated label needs a blank between the two emissions
    let aa = LabelSequence::new(vec![1, 1])?;
    println!("min frames for [a, a]: {}", aa.min_frames());
    let short = FrameLogProbs::from_probs(&Matrix::from_rows(&[[0.5, 0.5, 0.0], [0.5, 0.5, 0.0]]))?;
    match ctc_loss(&short, &aa) {
        Err(e) => println!("two frames for [a, a]: {e}"),
        Ok(r) => println!("unexpected loss {}", r.loss),
    }
    Ok(())
}
