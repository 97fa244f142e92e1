//! Connectionist temporal classification loss.
//!
//! The loss marginalizes over every frame-level path that collapses to the
//! target once repeats are merged and blanks removed. The sum is computed by
//! forward–backward over the blank-interleaved target (`2U + 1` states), in
//! log space throughout.

use crate::error::{Error, Result};
use crate::math::{log_add, log_softmax_rows, log_sum_exp, rel_error, Matrix};

/// Index of the blank symbol in every CTC vocabulary.
pub const BLANK: usize = 0;

/// Tolerance on `logsumexp(row) == 0` accepted by [`FrameLogProbs::new`].
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Largest number of paths [`ctc_brute_force`] will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// Denominator floor for relative errors in gradient checks.
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

/// `T × V` per-frame log-probabilities; column 0 is the blank.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameLogProbs {
    logp: Matrix,
}

impl FrameLogProbs {
    /// Wraps a matrix whose rows are normalized log distributions.
    pub fn new(logp: Matrix) -> Result<Self> {
        if logp.cols() < 2 {
            return Err(Error::InvalidArgument(
                "vocabulary must contain the blank and at least one label".into(),
            ));
        }
        for (t, row) in logp.iter_rows().enumerate() {
            let lse = log_sum_exp(row);
            if (lse.abs() > NORMALIZATION_TOL) || row.iter().any(|v| v.is_nan()) {
                return Err(Error::InvalidArgument(format!(
                    "row {t} is not normalized (logsumexp = {lse})"
                )));
            }
        }
        Ok(Self { logp })
    }

    /// Log-softmax of unnormalized scores.
    pub fn from_logits(logits: &Matrix) -> Result<Self> {
        Self::new(log_softmax_rows(logits))
    }

    /// Takes the log of a row-stochastic probability matrix.
    pub fn from_probs(probs: &Matrix) -> Result<Self> {
        Self::new(probs.map(f64::ln))
    }

    pub fn frame_count(&self) -> usize {
        self.logp.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.logp.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.logp
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.logp.row(t)
    }
}

/// Ordered target labels, never containing the blank.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct LabelSequence(Vec<usize>);

impl LabelSequence {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if labels.contains(&BLANK) {
            return Err(Error::InvalidArgument(
                "label sequences cannot contain the blank (0)".into(),
            ));
        }
        Ok(Self(labels))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn push(&mut self, label: usize) {
        assert_ne!(label, BLANK, "cannot push the blank");
        self.0.push(label);
    }

    pub fn extend_from(&mut self, other: &LabelSequence) {
        self.0.extend_from_slice(&other.0);
    }

    /// Number of adjacent equal pairs; each needs a separating blank frame.
    pub fn adjacent_repeats(&self) -> usize {
        self.0.windows(2).filter(|w| w[0] == w[1]).count()
    }

    /// Minimum number of frames any CTC path for this target needs.
    pub fn min_frames(&self) -> usize {
        self.len() + self.adjacent_repeats()
    }

    pub fn check_vocab(&self, vocab: usize) -> Result<()> {
        match self.0.iter().find(|&&l| l >= vocab) {
            Some(&label) => Err(Error::LabelOutOfVocab { label, vocab }),
            None => Ok(()),
        }
    }
}

impl From<LabelSequence> for Vec<usize> {
    fn from(l: LabelSequence) -> Self {
        l.0
    }
}

/// Scalar negative log-likelihood (nats) and its gradient.
///
/// For CTC the gradient is taken with respect to the unnormalized scores
/// feeding a row softmax, i.e. `softmax − occupancy`, so every row sums to
/// zero. For CTL it is with respect to the event probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct LossResult {
    pub loss: f64,
    pub grad: Matrix,
}

impl LossResult {
    /// `a·self + b·other`, both loss and gradient.
    pub fn weighted_sum(&self, a: f64, other: &LossResult, b: f64) -> LossResult {
        let mut grad = self.grad.clone();
        grad.scale(a);
        grad.add_scaled(&other.grad, b);
        LossResult {
            loss: a * self.loss + b * other.loss,
            grad,
        }
    }
}

fn extended_labels(y: &LabelSequence) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * y.len() + 1);
    ext.push(BLANK);
    for &l in y.labels() {
        ext.push(l);
        ext.push(BLANK);
    }
    ext
}

fn check_instance(x: &FrameLogProbs, y: &LabelSequence) -> Result<()> {
    y.check_vocab(x.vocab_size())?;
    if x.frame_count() < y.min_frames() {
        return Err(Error::NoValidAlignment {
            frames: x.frame_count(),
            labels: y.len(),
            repeats: y.adjacent_repeats(),
        });
    }
    Ok(())
}

/// Whether the lattice may jump from state `s - 2` to `s`.
fn can_skip(ext: &[usize], s: usize) -> bool {
    s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2]
}

/// CTC negative log-likelihood and its softmax-tangent gradient.
pub fn ctc_loss(x: &FrameLogProbs, y: &LabelSequence) -> Result<LossResult> {
    check_instance(x, y)?;
    let t_len = x.frame_count();
    let v = x.vocab_size();
    if t_len == 0 {
        // Only the empty target is feasible here, with probability one.
        return Ok(LossResult {
            loss: 0.0,
            grad: Matrix::zeros(0, v),
        });
    }

    let ext = extended_labels(y);
    let s_len = ext.len();
    let ninf = f64::NEG_INFINITY;

    let mut alpha = Matrix::filled(t_len, s_len, ninf);
    alpha.set(0, 0, x.row(0)[ext[0]]);
    if s_len > 1 {
        alpha.set(0, 1, x.row(0)[ext[1]]);
    }
    for t in 1..t_len {
        let lp = x.row(t);
        for s in 0..s_len {
            let mut acc = alpha.get(t - 1, s);
            if s >= 1 {
                acc = log_add(acc, alpha.get(t - 1, s - 1));
            }
            if can_skip(&ext, s) {
                acc = log_add(acc, alpha.get(t - 1, s - 2));
            }
            if acc != ninf {
                alpha.set(t, s, acc + lp[ext[s]]);
            }
        }
    }

    let last = t_len - 1;
    let mut log_likelihood = alpha.get(last, s_len - 1);
    if s_len > 1 {
        log_likelihood = log_add(log_likelihood, alpha.get(last, s_len - 2));
    }
    if log_likelihood == ninf {
        return Err(Error::NoValidAlignment {
            frames: t_len,
            labels: y.len(),
            repeats: y.adjacent_repeats(),
        });
    }

    // beta(t, s): log-probability of finishing from state s at frame t,
    // excluding the emission at t itself.
    let mut beta = Matrix::filled(t_len, s_len, ninf);
    beta.set(last, s_len - 1, 0.0);
    if s_len > 1 {
        beta.set(last, s_len - 2, 0.0);
    }
    for t in (0..last).rev() {
        let lp = x.row(t + 1);
        for s in 0..s_len {
            let mut acc = beta.get(t + 1, s) + lp[ext[s]];
            if s + 1 < s_len {
                acc = log_add(acc, beta.get(t + 1, s + 1) + lp[ext[s + 1]]);
            }
            if s + 2 < s_len && can_skip(&ext, s + 2) {
                acc = log_add(acc, beta.get(t + 1, s + 2) + lp[ext[s + 2]]);
            }
            beta.set(t, s, acc);
        }
    }

    let mut grad = Matrix::zeros(t_len, v);
    let mut occupancy = vec![ninf; v];
    for t in 0..t_len {
        occupancy.iter_mut().for_each(|o| *o = ninf);
        for (s, &sym) in ext.iter().enumerate() {
            let a = alpha.get(t, s);
            let b = beta.get(t, s);
            if a != ninf && b != ninf {
                occupancy[sym] = log_add(occupancy[sym], a + b - log_likelihood);
            }
        }
        let lp = x.row(t);
        let g = grad.row_mut(t);
        for k in 0..v {
            g[k] = lp[k].exp() - occupancy[k].exp();
        }
    }

    Ok(LossResult {
        loss: -log_likelihood,
        grad,
    })
}

/// Collapses a frame-level path: merge repeats, then drop blanks.
pub fn collapse_path(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &s in path {
        if Some(s) != prev && s != BLANK {
            out.push(s);
        }
        prev = Some(s);
    }
    out
}

/// Exact CTC loss by enumerating all `V^T` paths.
pub fn ctc_brute_force(x: &FrameLogProbs, y: &LabelSequence) -> Result<f64> {
    let t_len = x.frame_count();
    let v = x.vocab_size();
    let paths = (v as f64).powi(t_len as i32);
    if paths > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            paths,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    y.check_vocab(v)?;

    let mut path = vec![0usize; t_len];
    let mut total = f64::NEG_INFINITY;
    loop {
        if collapse_path(&path) == y.labels() {
            let lp: f64 = path.iter().enumerate().map(|(t, &s)| x.row(t)[s]).sum();
            total = log_add(total, lp);
        }
        // odometer increment over the path digits
        let mut pos = 0;
        loop {
            if pos == t_len {
                return if total == f64::NEG_INFINITY {
                    Err(Error::NoValidAlignment {
                        frames: t_len,
                        labels: y.len(),
                        repeats: y.adjacent_repeats(),
                    })
                } else {
                    Ok(-total)
                };
            }
            path[pos] += 1;
            if path[pos] < v {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
    }
}

/// Central finite differences of [`ctc_loss`] against its analytic gradient.
///
/// Each perturbation adds `±h` to one log-probability and re-normalizes the
/// row, which is the same as perturbing a softmax input. Returns the maximum
/// relative error over all `(t, v)`.
pub fn ctc_grad_check(x: &FrameLogProbs, y: &LabelSequence, h: f64) -> Result<f64> {
    let analytic = ctc_loss(x, y)?.grad;
    let numeric = numeric_logit_grad(x.matrix(), h, |logits| {
        let perturbed = FrameLogProbs::from_logits(logits)?;
        Ok(ctc_loss(&perturbed, y)?.loss)
    })?;
    Ok(max_rel_error(&analytic, &numeric))
}

pub(crate) fn numeric_logit_grad(
    base: &Matrix,
    h: f64,
    loss: impl Fn(&Matrix) -> Result<f64>,
) -> Result<Matrix> {
    let mut numeric = Matrix::zeros(base.rows(), base.cols());
    let mut work = base.clone();
    for t in 0..base.rows() {
        for k in 0..base.cols() {
            let orig = base.get(t, k);
            work.set(t, k, orig + h);
            let plus = loss(&work)?;
            work.set(t, k, orig - h);
            let minus = loss(&work)?;
            work.set(t, k, orig);
            numeric.set(t, k, (plus - minus) / (2.0 * h));
        }
    }
    Ok(numeric)
}

pub(crate) fn max_rel_error(analytic: &Matrix, numeric: &Matrix) -> f64 {
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(&a, &n)| rel_error(a, n, GRAD_CHECK_FLOOR))
        .fold(0.0, f64::max)
}
