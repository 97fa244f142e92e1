//! Connectionist temporal localization on per-frame event probabilities,
//! alone and mixed with the multiple-instance pooling loss.

use streamslu::ctl::{
    bag_labels_from_target, ctl_brute_force, ctl_grad_check, ctl_loss, ctl_mil_loss, mil_loss, mil_pool,
    rectified_delta, CtlTarget, EventProbs,
};

fn main() -> streamslu::Result<()> {
    // two events over five frames: event 0 rises at frame 1, event 1 at frame 3
    let y = EventProbs::from_rows(&[
        [0.05, 0.02],
        [0.90, 0.05],
        [0.92, 0.10],
        [0.30, 0.85],
        [0.10, 0.90],
    ])?;
    let b = rectified_delta(&y);
    println!("onset probabilities:");
    for row in b.z_on.iter_rows() {
        println!("  {:>6.3?}", row);
    }

    let target = CtlTarget::onsets(vec![0, 1]);
    let r = ctl_loss(&y, &target)?;
    println!("ctl loss [0, 1] = {:.6} (enumeration: {:.6})", r.loss, ctl_brute_force(&y, &target)?);
    let wrong = CtlTarget::onsets(vec![1, 0]);
    println!("ctl loss [1, 0] = {:.6}", ctl_loss(&y, &wrong)?.loss);
    let (err, n) = ctl_grad_check(&y, &target, 1e-6)?;
    println!("gradient check: max rel error {err:.2e} over {n} entries");

    let bags = bag_labels_from_target(&target, 2);
    println!("pooled {:?}", mil_pool(&y));
    println!("mil loss = {:.6}", mil_loss(&y, &bags)?.loss);
    println!("0.5 ctl + 0.5 mil = {:.6}", ctl_mil_loss(&y, &target, &bags, 0.5, 0.5)?.loss);

    let boundaries = CtlTarget::boundaries(vec![0, 2]);
    println!("onset-only vs boundary targets: {:.4} / {:.4}", r.loss, ctl_loss(&y, &boundaries)?.loss);
    Ok(())
}
