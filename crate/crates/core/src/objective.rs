//! Training objectives: which sequence loss each head uses, plus the
//! optional last-step cross entropy and MIL terms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ctc::{ctc_loss, LabelSequence, LossResult};
use crate::ctl::{bag_labels_from_target, ctl_mil_loss, CtlTarget, LabelMode};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::math::{rel_error, Matrix};
use crate::network::{
    last_step_ce, ForwardOptions, HeadGrads, HeadMode, HeadOutput, ModelParams, Network,
    DEFAULT_W_CE,
};

pub const DEFAULT_MIL_WEIGHT: f64 = crate::ctl::DEFAULT_W_MIL;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "ctc")]
    Ctc,
    #[serde(rename = "ctl")]
    Ctl,
    #[serde(rename = "ctc+ce")]
    CtcCe,
    #[serde(rename = "ctl+ce")]
    CtlCe,
    #[serde(rename = "ctl+mil")]
    CtlMil,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Ctc,
        LossKind::Ctl,
        LossKind::CtcCe,
        LossKind::CtlCe,
        LossKind::CtlMil,
    ];

    pub fn head_mode(self) -> HeadMode {
        match self {
            LossKind::Ctc | LossKind::CtcCe => HeadMode::Ctc,
            _ => HeadMode::Ctl,
        }
    }

    pub fn uses_ce(self) -> bool {
        matches!(self, LossKind::CtcCe | LossKind::CtlCe)
    }

    pub fn uses_mil(self) -> bool {
        self == LossKind::CtlMil
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Ctc => "ctc",
            LossKind::Ctl => "ctl",
            LossKind::CtcCe => "ctc+ce",
            LossKind::CtlCe => "ctl+ce",
            LossKind::CtlMil => "ctl+mil",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown loss kind {s:?}")))
    }
}

/// A loss kind with its weights resolved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    pub kind: LossKind,
    /// Weight of the last-step cross entropy; the sequence loss gets the rest.
    pub ce_weight: f64,
    /// Weight of MIL inside `ctl+mil`; CTL gets the rest.
    pub mil_weight: f64,
    pub ctl_mode: LabelMode,
}

impl Objective {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            ce_weight: if kind.uses_ce() { DEFAULT_W_CE } else { 0.0 },
            mil_weight: if kind.uses_mil() { DEFAULT_MIL_WEIGHT } else { 0.0 },
            ctl_mode: LabelMode::OnsetOnly,
        }
    }
}

/// Per-utterance targets, class ids starting at 1 for both heads.
#[derive(Clone, Copy, Debug)]
pub struct Targets<'a> {
    pub intents: &'a LabelSequence,
    pub slots: &'a LabelSequence,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub intent: f64,
    pub slot: f64,
}

/// Gradients of one head's loss: on the logits and on the probabilities.
pub struct HeadLoss {
    pub loss: f64,
    pub grad_logits: Option<Matrix>,
    pub grad_probs: Option<Matrix>,
}

fn ctl_target(labels: &LabelSequence, mode: LabelMode) -> CtlTarget {
    let labels = labels
        .labels()
        .iter()
        .flat_map(|&l| match mode {
            LabelMode::OnsetOnly => vec![l - 1],
            LabelMode::Boundary => vec![2 * (l - 1), 2 * (l - 1) + 1],
        })
        .collect();
    CtlTarget { labels, mode }
}

/// Loss and gradient of one head against 1-based class labels.
pub fn head_loss(obj: &Objective, head: &HeadOutput, labels: &LabelSequence) -> Result<HeadLoss> {
    let ce_label = labels.labels().last().copied();
    let w_ce = obj.ce_weight;
    match head.mode {
        HeadMode::Ctc => {
            let mut r = ctc_loss(&head.log_probs()?, labels)?;
            if w_ce > 0.0 {
                let label = ce_label.ok_or_else(|| Error::InvalidArgument("CE needs a label".into()))?;
                r = last_step_ce(&head.logits, label, &r, 1.0 - w_ce, w_ce)?;
            }
            Ok(HeadLoss {
                loss: r.loss,
                grad_logits: Some(r.grad),
                grad_probs: None,
            })
        }
        HeadMode::Ctl => {
            let y = head.event_probs()?;
            labels.check_vocab(y.event_count() + 1)?;
            let target = ctl_target(labels, obj.ctl_mode);
            let bag = bag_labels_from_target(&target, y.event_count());
            let mut seq = ctl_mil_loss(&y, &target, &bag, 1.0 - obj.mil_weight, obj.mil_weight)?;
            let mut grad_logits = None;
            if w_ce > 0.0 {
                let label = ce_label.ok_or_else(|| Error::InvalidArgument("CE needs a label".into()))?;
                let zero = LossResult {
                    loss: seq.loss,
                    grad: Matrix::zeros(head.logits.rows(), head.logits.cols()),
                };
                let ce = last_step_ce(&head.logits, label - 1, &zero, 1.0 - w_ce, w_ce)?;
                seq.grad.scale(1.0 - w_ce);
                seq.loss = ce.loss;
                grad_logits = Some(ce.grad);
            }
            Ok(HeadLoss {
                loss: seq.loss,
                grad_logits,
                grad_probs: Some(seq.grad),
            })
        }
    }
}

/// Sum of both heads' losses, with the gradients to seed the network.
pub fn utterance_loss(
    obj: &Objective,
    slot: &HeadOutput,
    intent: &HeadOutput,
    targets: Targets,
) -> Result<(LossBreakdown, HeadGrads)> {
    let s = head_loss(obj, slot, targets.slots)?;
    let i = head_loss(obj, intent, targets.intents)?;
    let grads = HeadGrads {
        slot_logits: s.grad_logits,
        slot_probs: s.grad_probs,
        intent_logits: i.grad_logits,
        intent_probs: i.grad_probs,
        aux_logits: None,
    };
    Ok((
        LossBreakdown {
            total: s.loss + i.loss,
            intent: i.loss,
            slot: s.loss,
        },
        grads,
    ))
}

/// Loss and parameter gradient of one stacked utterance.
pub fn loss_and_grad(
    net: &Network,
    params: &ModelParams,
    x: &FeatureMatrix,
    targets: Targets,
    obj: &Objective,
    opts: ForwardOptions,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let fwd = net.forward_train(params, x, opts)?;
    let mode = net.config().head_mode;
    let missing = || Error::TapeMismatch("full forward pass required".into());
    let slot = fwd.slot(mode).ok_or_else(missing)?;
    let intent = fwd.intent(mode).ok_or_else(missing)?;
    let (loss, grads) = utterance_loss(obj, &slot, &intent, targets)?;
    let g = net.backward(&fwd, grads)?;
    Ok((loss, g))
}

/// Result of comparing back-propagation with central differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub compared: usize,
    pub skipped: usize,
}

/// Central differences over every parameter whose analytic gradient exceeds
/// `min_grad` in magnitude.
pub fn network_grad_check(
    net: &Network,
    params: &ModelParams,
    x: &FeatureMatrix,
    targets: Targets,
    obj: &Objective,
    h: f64,
    min_grad: f64,
) -> Result<GradCheck> {
    let opts = ForwardOptions::default();
    let (_, analytic) = loss_and_grad(net, params, x, targets, obj, opts)?;
    let loss_at = |p: &ModelParams| -> Result<f64> {
        let fwd = net.forward(p, x)?;
        Ok(utterance_loss(obj, &fwd.slot, &fwd.intent, targets)?.0.total)
    };
    let mut probe = params.clone();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        compared: 0,
        skipped: 0,
    };
    for (i, &a) in analytic.iter().enumerate() {
        if a.abs() <= min_grad {
            out.skipped += 1;
            continue;
        }
        let orig = params.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let up = loss_at(&probe)?;
        probe.as_mut_slice()[i] = orig - h;
        let down = loss_at(&probe)?;
        probe.as_mut_slice()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let e = rel_error(a, numeric, min_grad.max(f64::MIN_POSITIVE));
        out.max_rel_error = out.max_rel_error.max(e);
        out.compared += 1;
    }
    Ok(out)
}
