//! Connectionist temporal localization loss with multiple-instance pooling.
//!
//! Event probabilities `y[t][e]` become boundary probabilities through the
//! rectified delta (`onset = max(0, y_t − y_{t−1})`, offset the mirror, with
//! `y_{−1} = 0`). Boundary labels are independent per frame, so a frame may
//! emit any subset of them; the target is emitted as consecutive slices, one
//! slice per frame, and repeated labels are never collapsed.
//!
//! The forward variable is kept in linear space and rescaled every frame; the
//! running log of the scale factors recovers the likelihood.

use crate::ctc::{max_rel_error, LossResult};
use crate::error::{Error, Result};
use crate::math::Matrix;

/// Largest number of subset sequences [`ctl_brute_force`] will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// Clamp applied to pooled probabilities inside the binary cross-entropy.
pub const BCE_CLAMP: f64 = 1e-7;

pub const DEFAULT_W_CTL: f64 = 0.5;
pub const DEFAULT_W_MIL: f64 = 0.5;

/// `T × E` event probabilities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EventProbs {
    y: Matrix,
}

impl EventProbs {
    pub fn new(y: Matrix) -> Result<Self> {
        if let Some(bad) = y
            .as_slice()
            .iter()
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidArgument(format!(
                "event probabilities must lie in [0, 1], found {bad}"
            )));
        }
        Ok(Self { y })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows))
    }

    pub fn frame_count(&self) -> usize {
        self.y.rows()
    }

    pub fn event_count(&self) -> usize {
        self.y.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.y
    }
}

/// Onset and offset probabilities, each `T × E`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryProbs {
    pub z_on: Matrix,
    pub z_off: Matrix,
}

/// How boundary label ids map onto events.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Label `e` is the onset of event `e`; offsets are not modelled.
    #[default]
    OnsetOnly,
    /// Label `2e` is the onset and `2e + 1` the offset of event `e`.
    Boundary,
}

impl LabelMode {
    pub fn alphabet_size(self, events: usize) -> usize {
        match self {
            LabelMode::OnsetOnly => events,
            LabelMode::Boundary => 2 * events,
        }
    }

    pub fn event_of(self, label: usize) -> usize {
        match self {
            LabelMode::OnsetOnly => label,
            LabelMode::Boundary => label / 2,
        }
    }
}

/// Ordered boundary labels to be emitted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CtlTarget {
    pub labels: Vec<usize>,
    pub mode: LabelMode,
}

impl CtlTarget {
    pub fn onsets(labels: Vec<usize>) -> Self {
        Self {
            labels,
            mode: LabelMode::OnsetOnly,
        }
    }

    pub fn boundaries(labels: Vec<usize>) -> Self {
        Self {
            labels,
            mode: LabelMode::Boundary,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn check(&self, alphabet: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l >= alphabet) {
            Some(&label) => Err(Error::LabelOutOfVocab {
                label,
                vocab: alphabet,
            }),
            None => Ok(()),
        }
    }
}

/// Rectified delta with `y[−1] = 0`.
pub fn rectified_delta(y: &EventProbs) -> BoundaryProbs {
    let (t_len, e_len) = y.matrix().shape();
    let mut z_on = Matrix::zeros(t_len, e_len);
    let mut z_off = Matrix::zeros(t_len, e_len);
    for t in 0..t_len {
        for e in 0..e_len {
            let prev = if t == 0 { 0.0 } else { y.matrix().get(t - 1, e) };
            let delta = y.matrix().get(t, e) - prev;
            z_on.set(t, e, delta.max(0.0));
            z_off.set(t, e, (-delta).max(0.0));
        }
    }
    BoundaryProbs { z_on, z_off }
}

/// Lays boundary probabilities out as a `T × A` matrix over label ids.
pub fn label_matrix(b: &BoundaryProbs, mode: LabelMode) -> Matrix {
    match mode {
        LabelMode::OnsetOnly => b.z_on.clone(),
        LabelMode::Boundary => {
            let (t_len, e_len) = b.z_on.shape();
            let mut z = Matrix::zeros(t_len, 2 * e_len);
            for t in 0..t_len {
                for e in 0..e_len {
                    z.set(t, 2 * e, b.z_on.get(t, e));
                    z.set(t, 2 * e + 1, b.z_off.get(t, e));
                }
            }
            z
        }
    }
}

fn has_duplicates(labels: &[usize]) -> bool {
    labels
        .iter()
        .enumerate()
        .any(|(i, l)| labels[..i].contains(l))
}

/// Probability that exactly the labels in `emitted` fire at one frame:
/// `Π_{l∈S} z(l) · Π_{l∉S} (1 − z(l))`. A slice naming a label twice has
/// probability zero.
pub fn emission_prob(z: &[f64], emitted: &[usize]) -> f64 {
    if has_duplicates(emitted) {
        return 0.0;
    }
    z.iter()
        .enumerate()
        .map(|(l, &zl)| if emitted.contains(&l) { zl } else { 1.0 - zl })
        .product()
}

/// Emission probability and its partial derivatives with respect to every
/// entry of `z`, via prefix/suffix products.
fn emission_with_grad(z: &[f64], emitted: &[usize], grad: &mut [f64]) -> f64 {
    if has_duplicates(emitted) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        return 0.0;
    }
    let factors: Vec<f64> = z
        .iter()
        .enumerate()
        .map(|(l, &zl)| if emitted.contains(&l) { zl } else { 1.0 - zl })
        .collect();
    let n = factors.len();
    let mut suffix = vec![1.0; n + 1];
    for l in (0..n).rev() {
        suffix[l] = suffix[l + 1] * factors[l];
    }
    let mut prefix = 1.0;
    for l in 0..n {
        let sign = if emitted.contains(&l) { 1.0 } else { -1.0 };
        grad[l] = sign * prefix * suffix[l + 1];
        prefix *= factors[l];
    }
    suffix[0]
}

/// CTL loss on boundary probabilities given directly as a `T × A` matrix.
///
/// The gradient is with respect to `z`.
pub fn ctl_loss_from_boundaries(z: &Matrix, labels: &[usize]) -> Result<LossResult> {
    let (t_len, a_len) = z.shape();
    if t_len == 0 {
        return Err(Error::InvalidArgument("CTL needs at least one frame".into()));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= a_len) {
        return Err(Error::LabelOutOfVocab {
            label,
            vocab: a_len,
        });
    }
    let k = labels.len();

    // emission[t][(i, j)] = p_t(l_{i-j+1..=i}), slice of length j ending at i
    let slices: Vec<(usize, usize)> = (0..=k).flat_map(|i| (0..=i).map(move |j| (i, j))).collect();
    let mut emission = vec![vec![0.0; slices.len()]; t_len];
    let mut emission_grad = vec![vec![vec![0.0; a_len]; slices.len()]; t_len];
    for t in 0..t_len {
        for (n, &(i, j)) in slices.iter().enumerate() {
            emission[t][n] =
                emission_with_grad(z.row(t), &labels[i - j..i], &mut emission_grad[t][n]);
        }
    }
    let slice_index = |i: usize, j: usize| i * (i + 1) / 2 + j;

    // Scaled forward pass. alpha[t] holds frames 0..t emitted (alpha[0] is
    // the initial state), normalized to sum to one.
    let mut alpha = vec![vec![0.0; k + 1]; t_len + 1];
    let mut log_scale_a = vec![0.0; t_len + 1];
    alpha[0][0] = 1.0;
    for t in 1..=t_len {
        for i in 0..=k {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += alpha[t - 1][i - j] * emission[t - 1][slice_index(i, j)];
            }
            alpha[t][i] = acc;
        }
        let c: f64 = alpha[t].iter().sum();
        if c == 0.0 {
            return Err(Error::UnreachableTarget);
        }
        alpha[t].iter_mut().for_each(|a| *a /= c);
        log_scale_a[t] = log_scale_a[t - 1] + c.ln();
    }
    let final_alpha = alpha[t_len][k];
    if final_alpha == 0.0 {
        return Err(Error::UnreachableTarget);
    }
    let log_likelihood = final_alpha.ln() + log_scale_a[t_len];

    // Scaled backward pass: beta[t][i] is the probability of emitting labels
    // i+1..=k in frames t..T (0-based frame t onwards).
    let mut beta = vec![vec![0.0; k + 1]; t_len + 1];
    let mut log_scale_b = vec![0.0; t_len + 1];
    beta[t_len][k] = 1.0;
    for t in (0..t_len).rev() {
        for i in 0..=k {
            let mut acc = 0.0;
            for j in 0..=(k - i) {
                acc += emission[t][slice_index(i + j, j)] * beta[t + 1][i + j];
            }
            beta[t][i] = acc;
        }
        let d: f64 = beta[t].iter().sum();
        if d == 0.0 {
            return Err(Error::UnreachableTarget);
        }
        beta[t].iter_mut().for_each(|b| *b /= d);
        log_scale_b[t] = log_scale_b[t + 1] + d.ln();
    }

    let mut grad = Matrix::zeros(t_len, a_len);
    for t in 0..t_len {
        // alpha before frame t is alpha[t]; beta after frame t is beta[t + 1]
        let factor = (log_scale_a[t] + log_scale_b[t + 1] - log_likelihood).exp();
        let g = grad.row_mut(t);
        for i in 0..=k {
            let b = beta[t + 1][i];
            if b == 0.0 {
                continue;
            }
            for j in 0..=i {
                let a = alpha[t][i - j];
                if a == 0.0 {
                    continue;
                }
                let w = -factor * a * b;
                for (gl, dp) in g.iter_mut().zip(&emission_grad[t][slice_index(i, j)]) {
                    *gl += w * dp;
                }
            }
        }
    }

    Ok(LossResult {
        loss: -log_likelihood,
        grad,
    })
}

/// Back-propagates a gradient on boundary labels to event probabilities.
///
/// The rectifier subgradient is zero at ties `y_t = y_{t−1}`.
pub fn rectified_delta_backward(y: &EventProbs, grad_z: &Matrix, mode: LabelMode) -> Matrix {
    let (t_len, e_len) = y.matrix().shape();
    let mut grad_y = Matrix::zeros(t_len, e_len);
    for t in 0..t_len {
        for e in 0..e_len {
            let prev = if t == 0 { 0.0 } else { y.matrix().get(t - 1, e) };
            let delta = y.matrix().get(t, e) - prev;
            let (g_on, g_off) = match mode {
                LabelMode::OnsetOnly => (grad_z.get(t, e), 0.0),
                LabelMode::Boundary => (grad_z.get(t, 2 * e), grad_z.get(t, 2 * e + 1)),
            };
            // d z_on/d y_t = 1 and d z_off/d y_t = -1 on their active sides
            let local = if delta > 0.0 {
                g_on
            } else if delta < 0.0 {
                -g_off
            } else {
                0.0
            };
            if local != 0.0 {
                grad_y.set(t, e, grad_y.get(t, e) + local);
                if t > 0 {
                    grad_y.set(t - 1, e, grad_y.get(t - 1, e) - local);
                }
            }
        }
    }
    grad_y
}

/// CTL negative log-likelihood of `target`, gradient with respect to `y`.
pub fn ctl_loss(y: &EventProbs, target: &CtlTarget) -> Result<LossResult> {
    if y.frame_count() == 0 {
        return Err(Error::InvalidArgument("CTL needs at least one frame".into()));
    }
    target.check(target.mode.alphabet_size(y.event_count()))?;
    let z = label_matrix(&rectified_delta(y), target.mode);
    let r = ctl_loss_from_boundaries(&z, &target.labels)?;
    Ok(LossResult {
        loss: r.loss,
        grad: rectified_delta_backward(y, &r.grad, target.mode),
    })
}

/// Exact CTL loss on a boundary matrix by enumerating every per-frame subset
/// sequence and keeping those that concatenate to the target.
pub fn ctl_brute_force_from_boundaries(z: &Matrix, labels: &[usize]) -> Result<f64> {
    let (t_len, a_len) = z.shape();
    let per_frame = 1usize << a_len;
    let total = (per_frame as f64).powi(t_len as i32);
    if total > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            paths: total,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let subset_prob = |t: usize, mask: usize| -> f64 {
        (0..a_len)
            .map(|l| {
                let zl = z.get(t, l);
                if mask & (1 << l) != 0 {
                    zl
                } else {
                    1.0 - zl
                }
            })
            .product()
    };
    let mut masks = vec![0usize; t_len];
    let mut sum = 0.0;
    loop {
        // does this subset sequence spell the target slice by slice?
        let mut pos = 0;
        let mut ok = true;
        for &mask in &masks {
            let size = mask.count_ones() as usize;
            if pos + size > labels.len() {
                ok = false;
                break;
            }
            let slice = &labels[pos..pos + size];
            let slice_mask = slice.iter().fold(0usize, |m, &l| m | (1 << l));
            if slice_mask != mask || slice_mask.count_ones() as usize != size {
                ok = false;
                break;
            }
            pos += size;
        }
        if ok && pos == labels.len() {
            sum += (0..t_len).map(|t| subset_prob(t, masks[t])).product::<f64>();
        }
        let mut p = 0;
        loop {
            if p == t_len {
                return if sum > 0.0 {
                    Ok(-sum.ln())
                } else {
                    Err(Error::UnreachableTarget)
                };
            }
            masks[p] += 1;
            if masks[p] < per_frame {
                break;
            }
            masks[p] = 0;
            p += 1;
        }
    }
}

/// Exact CTL loss by enumeration, starting from event probabilities.
pub fn ctl_brute_force(y: &EventProbs, target: &CtlTarget) -> Result<f64> {
    target.check(target.mode.alphabet_size(y.event_count()))?;
    let z = label_matrix(&rectified_delta(y), target.mode);
    ctl_brute_force_from_boundaries(&z, &target.labels)
}

/// Linear softmax pooling: `ŷ(e) = Σ_t y² / Σ_t y`, zero for an all-zero
/// column.
pub fn mil_pool(y: &EventProbs) -> Vec<f64> {
    let (t_len, e_len) = y.matrix().shape();
    (0..e_len)
        .map(|e| {
            let (mut s1, mut s2) = (0.0, 0.0);
            for t in 0..t_len {
                let v = y.matrix().get(t, e);
                s1 += v;
                s2 += v * v;
            }
            if s1 == 0.0 {
                0.0
            } else {
                s2 / s1
            }
        })
        .collect()
}

/// Mean binary cross-entropy of the pooled probabilities against bag labels,
/// with gradient with respect to `y`.
pub fn mil_loss(y: &EventProbs, bag_labels: &[bool]) -> Result<LossResult> {
    let (t_len, e_len) = y.matrix().shape();
    if bag_labels.len() != e_len {
        return Err(Error::DimensionMismatch {
            expected: e_len,
            got: bag_labels.len(),
        });
    }
    if t_len == 0 {
        return Err(Error::InvalidArgument("MIL pooling needs at least one frame".into()));
    }
    let pooled = mil_pool(y);
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(t_len, e_len);
    for e in 0..e_len {
        let raw = pooled[e];
        let p = raw.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let (l, dl_dp) = if bag_labels[e] {
            (-p.ln(), -1.0 / p)
        } else {
            (-(1.0 - p).ln(), 1.0 / (1.0 - p))
        };
        loss += l;
        if raw != p {
            continue;
        }
        let (mut s1, mut s2) = (0.0, 0.0);
        for t in 0..t_len {
            let v = y.matrix().get(t, e);
            s1 += v;
            s2 += v * v;
        }
        if s1 == 0.0 {
            continue;
        }
        for t in 0..t_len {
            let v = y.matrix().get(t, e);
            let dp_dy = (2.0 * v * s1 - s2) / (s1 * s1);
            grad.set(t, e, dl_dp * dp_dy / e_len as f64);
        }
    }
    Ok(LossResult {
        loss: loss / e_len as f64,
        grad,
    })
}

/// `bag(e) = 1` iff some target label belongs to event `e`.
pub fn bag_labels_from_target(target: &CtlTarget, events: usize) -> Vec<bool> {
    let mut bag = vec![false; events];
    for &l in &target.labels {
        let e = target.mode.event_of(l);
        if e < events {
            bag[e] = true;
        }
    }
    bag
}

/// `w_ctl · ctl_loss + w_mil · mil_loss`. A component with zero weight is not
/// evaluated.
pub fn ctl_mil_loss(
    y: &EventProbs,
    target: &CtlTarget,
    bag_labels: &[bool],
    w_ctl: f64,
    w_mil: f64,
) -> Result<LossResult> {
    if w_ctl < 0.0 || w_mil < 0.0 || (w_ctl + w_mil - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "loss weights must be non-negative and sum to one (got {w_ctl}, {w_mil})"
        )));
    }
    let mut out = LossResult {
        loss: 0.0,
        grad: Matrix::zeros(y.frame_count(), y.event_count()),
    };
    if w_ctl > 0.0 {
        let r = ctl_loss(y, target)?;
        out = out.weighted_sum(1.0, &r, w_ctl);
    }
    if w_mil > 0.0 {
        let r = mil_loss(y, bag_labels)?;
        out = out.weighted_sum(1.0, &r, w_mil);
    }
    Ok(out)
}

/// Central differences of [`ctl_loss`] against its analytic gradient.
///
/// Entries within `2h` of a rectifier kink (a tie with the previous frame, or
/// of the next frame with this one) are skipped since the loss is not
/// differentiable there. Returns the maximum relative error and the number of
/// entries compared.
pub fn ctl_grad_check(y: &EventProbs, target: &CtlTarget, h: f64) -> Result<(f64, usize)> {
    ctl_grad_check_with(y, target, h, |y, t| ctl_loss(y, t))
}

pub(crate) fn ctl_grad_check_with(
    y: &EventProbs,
    target: &CtlTarget,
    h: f64,
    loss_fn: impl Fn(&EventProbs, &CtlTarget) -> Result<LossResult>,
) -> Result<(f64, usize)> {
    let analytic = loss_fn(y, target)?.grad;
    let m = y.matrix();
    let (t_len, e_len) = m.shape();
    let near_kink = |t: usize, e: usize| {
        let v = m.get(t, e);
        let prev = if t == 0 { 0.0 } else { m.get(t - 1, e) };
        let next_close = t + 1 < t_len && (m.get(t + 1, e) - v).abs() < 2.0 * h;
        (v - prev).abs() < 2.0 * h || next_close || v < h || v > 1.0 - h
    };
    let mut compared = 0;
    let mut num = Matrix::zeros(t_len, e_len);
    let mut ana = Matrix::zeros(t_len, e_len);
    let mut work = m.clone();
    for t in 0..t_len {
        for e in 0..e_len {
            if near_kink(t, e) {
                continue;
            }
            let orig = m.get(t, e);
            work.set(t, e, orig + h);
            let plus = loss_fn(&EventProbs::new(work.clone())?, target)?.loss;
            work.set(t, e, orig - h);
            let minus = loss_fn(&EventProbs::new(work.clone())?, target)?.loss;
            work.set(t, e, orig);
            num.set(t, e, (plus - minus) / (2.0 * h));
            ana.set(t, e, analytic.get(t, e));
            compared += 1;
        }
    }
    Ok((max_rel_error(&ana, &num), compared))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ep(rows: &[&[f64]]) -> EventProbs {
        EventProbs::from_rows(rows).unwrap()
    }

    #[test]
    fn rectified_delta_examples() {
        let b = rectified_delta(&ep(&[&[0.1], &[0.7], &[0.7], &[0.2]]));
        let on: Vec<f64> = b.z_on.as_slice().to_vec();
        let off: Vec<f64> = b.z_off.as_slice().to_vec();
        let expect_on = [0.1, 0.6, 0.0, 0.0];
        let expect_off = [0.0, 0.0, 0.0, 0.5];
        for i in 0..4 {
            assert!((on[i] - expect_on[i]).abs() < 1e-12);
            assert!((off[i] - expect_off[i]).abs() < 1e-12);
        }

        let b = rectified_delta(&ep(&[&[0.4], &[0.4], &[0.4]]));
        assert_eq!(b.z_on.as_slice(), &[0.4, 0.0, 0.0]);
        assert_eq!(b.z_off.as_slice(), &[0.0, 0.0, 0.0]);

        let b = rectified_delta(&ep(&[&[0.1], &[0.3], &[0.9], &[1.0]]));
        assert!(b.z_off.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn emission_prob_examples() {
        assert!((emission_prob(&[0.8], &[0]) - 0.8).abs() < 1e-15);
        assert!((emission_prob(&[0.8], &[]) - 0.2).abs() < 1e-15);
        for s in [&[][..], &[0], &[1], &[0, 1]] {
            assert!((emission_prob(&[0.5, 0.5], s) - 0.25).abs() < 1e-15);
        }
        assert!((emission_prob(&[0.9, 0.1], &[0]) - 0.81).abs() < 1e-15);
        assert_eq!(emission_prob(&[0.9, 0.1], &[0, 0]), 0.0);
    }

    #[test]
    fn single_frame_onset() {
        let r = ctl_loss(&ep(&[&[0.8]]), &CtlTarget::onsets(vec![0])).unwrap();
        assert!((r.loss + 0.8f64.ln()).abs() < 1e-12);
        assert!((r.loss - 0.223_144).abs() < 1e-6);
    }

    #[test]
    fn two_frames_single_label_on_boundaries() {
        // z1 (1 − z2) + (1 − z1) z2 = 0.6·0.5 + 0.4·0.5
        let z = Matrix::from_rows(&[[0.6], [0.5]]);
        let r = ctl_loss_from_boundaries(&z, &[0]).unwrap();
        assert!((r.loss + 0.5f64.ln()).abs() < 1e-12);
        let bf = ctl_brute_force_from_boundaries(&z, &[0]).unwrap();
        assert!((bf - r.loss).abs() < 1e-10);
    }

    #[test]
    fn offset_target_in_boundary_mode() {
        // y = [0.6, 0.1]: onset [0.6, 0], offset [0, 0.5]. Only path: nothing
        // at frame one (0.4 · 1), offset alone at frame two (1 · 0.5).
        let y = ep(&[&[0.6], &[0.1]]);
        let target = CtlTarget::boundaries(vec![1]);
        let r = ctl_loss(&y, &target).unwrap();
        assert!((r.loss + 0.2f64.ln()).abs() < 1e-12);
        assert!((ctl_brute_force(&y, &target).unwrap() - r.loss).abs() < 1e-10);
    }

    #[test]
    fn repeated_label_needs_two_frames() {
        let z = Matrix::from_rows(&[[0.9]]);
        assert!(matches!(
            ctl_loss_from_boundaries(&z, &[0, 0]),
            Err(Error::UnreachableTarget)
        ));
        assert!(matches!(
            ctl_brute_force_from_boundaries(&z, &[0, 0]),
            Err(Error::UnreachableTarget)
        ));
        let z = Matrix::from_rows(&[[0.9], [0.9]]);
        let r = ctl_loss_from_boundaries(&z, &[0, 0]).unwrap();
        assert!((r.loss + 0.81f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_target_is_all_silent() {
        let y = ep(&[&[0.3, 0.1], &[0.5, 0.05]]);
        let z = label_matrix(&rectified_delta(&y), LabelMode::OnsetOnly);
        let expected: f64 = z.as_slice().iter().map(|v| (1.0 - v).ln()).sum();
        let r = ctl_loss(&y, &CtlTarget::onsets(vec![])).unwrap();
        assert!((r.loss + expected).abs() < 1e-12);
        let bf = ctl_brute_force(&y, &CtlTarget::onsets(vec![])).unwrap();
        assert!((bf - r.loss).abs() < 1e-12);
    }

    #[test]
    fn zero_boundary_label_is_unreachable() {
        let y = ep(&[&[0.0, 0.5], &[0.0, 0.7]]);
        let t = CtlTarget::onsets(vec![0]);
        assert!(matches!(ctl_loss(&y, &t), Err(Error::UnreachableTarget)));
        assert!(matches!(ctl_brute_force(&y, &t), Err(Error::UnreachableTarget)));
    }

    #[test]
    fn overlapping_labels_fire_together() {
        let z = Matrix::from_rows(&[[0.7, 0.6]]);
        let r = ctl_loss_from_boundaries(&z, &[0, 1]).unwrap();
        assert!((r.loss + (0.7f64 * 0.6).ln()).abs() < 1e-12);
    }

    #[test]
    fn random_instances_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..300 {
            let t = rng.random_range(1..=4);
            let a = rng.random_range(1..=2);
            let k = rng.random_range(0..=3);
            let labels: Vec<usize> = (0..k).map(|_| rng.random_range(0..a)).collect();
            let z = Matrix::from_vec(t, a, (0..t * a).map(|_| rng.random::<f64>()).collect());
            match (
                ctl_loss_from_boundaries(&z, &labels),
                ctl_brute_force_from_boundaries(&z, &labels),
            ) {
                (Ok(r), Ok(bf)) => assert!((r.loss - bf).abs() <= 1e-9, "{} vs {bf}", r.loss),
                (Err(Error::UnreachableTarget), Err(Error::UnreachableTarget)) => {}
                other => panic!("disagreement: {other:?}"),
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..30 {
            let mode = if trial % 2 == 0 {
                LabelMode::OnsetOnly
            } else {
                LabelMode::Boundary
            };
            let e = 2;
            let y = EventProbs::new(Matrix::from_vec(
                4,
                e,
                (0..4 * e).map(|_| rng.random_range(0.05..0.95)).collect(),
            ))
            .unwrap();
            let alphabet = mode.alphabet_size(e);
            let labels: Vec<usize> = (0..2).map(|_| rng.random_range(0..alphabet)).collect();
            let target = CtlTarget { labels, mode };
            match ctl_grad_check(&y, &target, 1e-6) {
                Ok((err, _)) => assert!(err <= 1e-4, "trial {trial}: {err}"),
                Err(Error::UnreachableTarget) => {}
                Err(other) => panic!("{other}"),
            }
        }
    }

    #[test]
    fn mil_pool_examples() {
        assert!((mil_pool(&ep(&[&[0.2], &[0.8]]))[0] - 0.68).abs() < 1e-12);
        assert!((mil_pool(&ep(&[&[0.3], &[0.3], &[0.3]]))[0] - 0.3).abs() < 1e-12);
        assert_eq!(mil_pool(&ep(&[&[0.0], &[0.0]]))[0], 0.0);
    }

    #[test]
    fn mil_pool_is_bounded_by_column_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let t = rng.random_range(1..8);
            let col: Vec<f64> = (0..t).map(|_| rng.random::<f64>()).collect();
            let y = EventProbs::new(Matrix::from_vec(t, 1, col.clone())).unwrap();
            let p = mil_pool(&y)[0];
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(0.0, f64::max);
            assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
        }
    }

    #[test]
    fn ctl_mil_weight_degeneracies() {
        let y = ep(&[&[0.8]]);
        let t = CtlTarget::onsets(vec![0]);
        let ctl = ctl_loss(&y, &t).unwrap();
        let only_ctl = ctl_mil_loss(&y, &t, &[true], 1.0, 0.0).unwrap();
        assert_eq!(only_ctl.loss, ctl.loss);
        assert_eq!(only_ctl.grad, ctl.grad);

        let c = ep(&[&[0.35], &[0.35], &[0.35]]);
        let only_mil = ctl_mil_loss(&c, &t, &[true], 0.0, 1.0).unwrap();
        assert!((only_mil.loss + 0.35f64.ln()).abs() < 1e-12);

        let half = ctl_mil_loss(&y, &t, &[true], 0.5, 0.5).unwrap();
        assert!((half.loss - 0.223_144).abs() < 1e-6);

        assert!(ctl_mil_loss(&y, &t, &[true], 0.7, 0.7).is_err());
    }

    #[test]
    fn ctl_mil_gradient_matches_finite_differences() {
        let y = ep(&[&[0.2, 0.6], &[0.5, 0.3], &[0.9, 0.1]]);
        let t = CtlTarget::onsets(vec![0, 1]);
        let bag = bag_labels_from_target(&t, 2);
        let (err, n) = ctl_grad_check_with(&y, &t, 1e-6, |y, t| {
            ctl_mil_loss(y, t, &bag, 0.5, 0.5)
        })
        .unwrap();
        assert!(n > 0);
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn bag_labels_follow_target_events() {
        let t = CtlTarget::boundaries(vec![2, 3, 0]);
        assert_eq!(bag_labels_from_target(&t, 3), vec![true, true, false]);
    }
}
