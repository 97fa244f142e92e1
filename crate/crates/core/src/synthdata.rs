//! Seeded synthetic corpus of spoken commands.
//!
//! Each intent owns a three-part sign pattern over the low feature band and
//! each slot a sign pattern over the high band. A command is a run of frames
//! showing its intent pattern throughout and its slot pattern over the middle
//! half, surrounded by noise-only silence. Speaker groups apply a fixed
//! per-dimension gain and offset to the patterns.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ctc::LabelSequence;
use crate::error::{Error, Result};
use crate::features::{load_features, save_features, FeatureMatrix};
use crate::math::Matrix;

/// Pattern parts per intent, the phone analog used for frame targets.
pub const PARTS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub n_intents: usize,
    pub n_slots: usize,
    pub feat_dim: usize,
    /// Dimensions carrying the slot pattern; the rest carry the intent.
    pub slot_dims: usize,
    /// Highest dimensions left without any template, noise only.
    pub quiet_dims: usize,
    /// Inclusive command length range in frames.
    pub command_len: (usize, usize),
    /// Inclusive silence length range before and after each command.
    pub silence_len: (usize, usize),
    pub noise: f64,
    pub seed: u64,
    /// Seed of the class templates and speaker jitter. Corpora meant to be
    /// used together must share it.
    pub template_seed: u64,
    pub size: usize,
    pub speakers: usize,
    /// Commands per utterance, 1 or 2.
    pub labels_per_utterance: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_intents: 15,
            n_slots: 8,
            feat_dim: 16,
            slot_dims: 5,
            quiet_dims: 3,
            command_len: (200, 260),
            silence_len: (20, 40),
            noise: 0.3,
            seed: 0,
            template_seed: 0,
            size: 300,
            speakers: 10,
            labels_per_utterance: 1,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.n_intents < 2 || self.n_slots < 2 {
            return err(format!(
                "need at least 2 intents and 2 slots (got {}, {})",
                self.n_intents, self.n_slots
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return err(format!("noise must be finite and >= 0 (got {})", self.noise));
        }
        if self.slot_dims == 0 || self.slot_dims + self.quiet_dims >= self.feat_dim {
            return err(format!(
                "slot_dims + quiet_dims must leave intent dimensions (got {} + {} of {})",
                self.slot_dims, self.quiet_dims, self.feat_dim
            ));
        }
        if !fits(self.n_slots, self.slot_dims) || !fits(PARTS.max(self.n_intents), self.intent_dims()) {
            return err("too many classes for the available pattern dimensions".into());
        }
        if self.command_len.0 < 4 || self.command_len.0 > self.command_len.1 {
            return err(format!("bad command length range {:?}", self.command_len));
        }
        if self.silence_len.0 > self.silence_len.1 {
            return err(format!("bad silence length range {:?}", self.silence_len));
        }
        if self.speakers == 0 {
            return err("speakers must be >= 1".into());
        }
        if !(1..=2).contains(&self.labels_per_utterance) {
            return err("labels_per_utterance must be 1 or 2".into());
        }
        Ok(())
    }

    pub fn intent_dims(&self) -> usize {
        self.feat_dim - self.slot_dims - self.quiet_dims
    }

    /// Dimensions carrying the slot pattern.
    pub fn slot_band(&self) -> std::ops::Range<usize> {
        let di = self.intent_dims();
        di..di + self.slot_dims
    }

    /// Frame-target classes excluding blank: one per intent part.
    pub fn aux_vocab(&self) -> usize {
        PARTS * self.n_intents
    }
}

/// A command inside an utterance, `[start, end)` in frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub intent: usize,
    pub slot: usize,
}

impl Segment {
    /// Frames carrying the slot pattern.
    pub fn slot_span(&self) -> (usize, usize) {
        let len = self.end - self.start;
        let s = self.start + len / 4;
        (s, s + len / 2)
    }

    /// Part of the intent pattern active at frame `t`.
    pub fn part_at(&self, t: usize) -> usize {
        (t - self.start) * PARTS / (self.end - self.start)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticUtterance {
    pub id: String,
    pub speaker: usize,
    pub features: FeatureMatrix,
    pub intent_labels: LabelSequence,
    pub slot_labels: LabelSequence,
    pub segments: Vec<Segment>,
    /// 0 for silence, else `1 + PARTS·(intent − 1) + part`.
    pub frame_targets: Vec<usize>,
}

/// Per-frame targets implied by `segments`.
pub fn frame_targets(frames: usize, segments: &[Segment]) -> Vec<usize> {
    let mut out = vec![0; frames];
    for s in segments {
        for (t, v) in out.iter_mut().enumerate().take(s.end.min(frames)).skip(s.start) {
            *v = 1 + PARTS * (s.intent - 1) + s.part_at(t);
        }
    }
    out
}

/// Class templates and speaker jitter for one template seed.
#[derive(Clone, Debug)]
pub struct Templates {
    /// `[intent][part][dim]` signs over the intent band.
    intent: Vec<Vec<Vec<f64>>>,
    /// `[slot][dim]` signs over the slot band.
    slot: Vec<Vec<f64>>,
    gain: Vec<Vec<f64>>,
    offset: Vec<Vec<f64>>,
    intent_dims: usize,
    feat_dim: usize,
}

fn fits(count: usize, dims: usize) -> bool {
    dims >= 63 || count <= 1 << dims
}

fn distinct_patterns(rng: &mut ChaCha8Rng, count: usize, dims: usize) -> Vec<Vec<f64>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mask = if dims >= 64 { u64::MAX } else { (1u64 << dims) - 1 };
        let bits: u64 = rng.random::<u64>() & mask;
        if seen.insert(bits) {
            out.push((0..dims).map(|d| if bits >> d & 1 == 1 { 1.0 } else { -1.0 }).collect());
        }
    }
    out
}

impl Templates {
    pub fn new(spec: &CorpusSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.template_seed);
        let di = spec.intent_dims();
        // whole three-part patterns are distinct per intent
        let mut intent = Vec::with_capacity(spec.n_intents);
        let mut seen = BTreeSet::new();
        while intent.len() < spec.n_intents {
            let parts: Vec<Vec<f64>> = distinct_patterns(&mut rng, PARTS, di);
            let key: Vec<Vec<i8>> = parts
                .iter()
                .map(|p| p.iter().map(|&v| v as i8).collect())
                .collect();
            if seen.insert(key) {
                intent.push(parts);
            }
        }
        let slot = distinct_patterns(&mut rng, spec.n_slots, spec.slot_dims);
        let mut gain = Vec::with_capacity(spec.speakers);
        let mut offset = Vec::with_capacity(spec.speakers);
        for _ in 0..spec.speakers {
            gain.push((0..spec.feat_dim).map(|_| rng.random_range(0.8..1.2)).collect());
            offset.push((0..spec.feat_dim).map(|_| rng.random_range(-0.2..0.2)).collect());
        }
        Ok(Self {
            intent,
            slot,
            gain,
            offset,
            intent_dims: di,
            feat_dim: spec.feat_dim,
        })
    }

    /// Noise-free feature of one command frame.
    pub fn frame(&self, seg: &Segment, t: usize, speaker: usize) -> Vec<f64> {
        let part = seg.part_at(t);
        let (s0, s1) = seg.slot_span();
        let in_slot = (s0..s1).contains(&t);
        let slot_end = self.intent_dims + self.slot[0].len();
        let (g, o) = (&self.gain[speaker], &self.offset[speaker]);
        (0..self.feat_dim)
            .map(|d| {
                let base = if d < self.intent_dims {
                    self.intent[seg.intent - 1][part][d]
                } else if in_slot && d < slot_end {
                    self.slot[seg.slot - 1][d - self.intent_dims]
                } else {
                    return 0.0;
                };
                g[d] * base + o[d]
            })
            .collect()
    }
}

/// Deterministic balanced class for item `i`: a fresh seeded permutation of
/// the classes for every block of `n` consecutive items.
fn balanced_class(seed: u64, salt: u64, i: usize, n: usize) -> usize {
    let block = (i / n) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(block);
    let mut perm: Vec<usize> = (1..=n).collect();
    perm.shuffle(&mut rng);
    perm[i % n]
}

/// Builds corpora for one spec.
pub struct Generator {
    spec: CorpusSpec,
    templates: Templates,
    noise: Normal<f64>,
}

fn to_f32(v: f64) -> f64 {
    v as f32 as f64
}

impl Generator {
    pub fn new(spec: CorpusSpec) -> Result<Self> {
        let templates = Templates::new(&spec)?;
        let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            spec,
            templates,
            noise,
        })
    }

    pub fn spec(&self) -> &CorpusSpec {
        &self.spec
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    fn rng_for(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(index as u64);
        rng
    }

    fn silence_len(&self, rng: &mut ChaCha8Rng) -> usize {
        rng.random_range(self.spec.silence_len.0..=self.spec.silence_len.1)
    }

    /// Noise-only frames.
    pub fn silence(&self, rng: &mut ChaCha8Rng, frames: usize) -> FeatureMatrix {
        let d = self.spec.feat_dim;
        let data = (0..frames * d).map(|_| to_f32(self.noise.sample(rng))).collect();
        FeatureMatrix::new(Matrix::from_vec(frames, d, data)).expect("finite noise")
    }

    /// One command with leading and trailing silence.
    pub fn command(
        &self,
        rng: &mut ChaCha8Rng,
        id: String,
        speaker: usize,
        intent: usize,
        slot: usize,
    ) -> SyntheticUtterance {
        let spec = &self.spec;
        let pre = self.silence_len(rng);
        let len = rng.random_range(spec.command_len.0..=spec.command_len.1);
        let post = self.silence_len(rng);
        let total = pre + len + post;
        let seg = Segment {
            start: pre,
            end: pre + len,
            intent,
            slot,
        };
        let d = spec.feat_dim;
        let mut m = Matrix::zeros(total, d);
        for t in 0..total {
            let clean = if (seg.start..seg.end).contains(&t) {
                self.templates.frame(&seg, t, speaker)
            } else {
                vec![0.0; d]
            };
            for (v, c) in m.row_mut(t).iter_mut().zip(clean) {
                *v = to_f32(c + self.noise.sample(rng));
            }
        }
        let segments = vec![seg];
        SyntheticUtterance {
            id,
            speaker,
            features: FeatureMatrix::new(m).expect("finite features"),
            intent_labels: LabelSequence::new(vec![intent]).expect("intent ids start at 1"),
            slot_labels: LabelSequence::new(vec![slot]).expect("slot ids start at 1"),
            frame_targets: frame_targets(total, &segments),
            segments,
        }
    }

    /// Utterance `index` of the corpus.
    pub fn utterance(&self, index: usize) -> SyntheticUtterance {
        let spec = &self.spec;
        let mut rng = self.rng_for(index);
        let speaker = index % spec.speakers;
        let id = format!("utt{index:06}");
        let intent = balanced_class(spec.seed, 1, index, spec.n_intents);
        let slot = balanced_class(spec.seed, 2, index, spec.n_slots);
        let first = self.command(&mut rng, id.clone(), speaker, intent, slot);
        if spec.labels_per_utterance == 1 {
            return first;
        }
        let intent = balanced_class(spec.seed, 3, index, spec.n_intents);
        let slot = balanced_class(spec.seed, 4, index, spec.n_slots);
        let second = self.command(&mut rng, id, speaker, intent, slot);
        let gap_len = self.silence_len(&mut rng);
        let gap = self.silence(&mut rng, gap_len);
        concat_two(&first, &second, &gap).expect("same speaker and dimension")
    }

    pub fn generate(&self) -> Vec<SyntheticUtterance> {
        (0..self.spec.size).map(|i| self.utterance(i)).collect()
    }
}

/// Generates the whole corpus described by `spec`.
pub fn generate(spec: &CorpusSpec) -> Result<Vec<SyntheticUtterance>> {
    Ok(Generator::new(spec.clone())?.generate())
}

/// `a`, then `gap`, then `b`, with labels and segments concatenated in order.
pub fn concat_two(
    a: &SyntheticUtterance,
    b: &SyntheticUtterance,
    gap: &FeatureMatrix,
) -> Result<SyntheticUtterance> {
    if a.speaker != b.speaker {
        return Err(Error::SpeakerMismatch(a.speaker, b.speaker));
    }
    let mut features = a.features.clone();
    features.append(gap)?;
    features.append(&b.features)?;
    let shift = a.features.frame_count() + gap.frame_count();
    let mut segments = a.segments.clone();
    segments.extend(b.segments.iter().map(|s| Segment {
        start: s.start + shift,
        end: s.end + shift,
        ..*s
    }));
    let mut intent_labels = a.intent_labels.clone();
    intent_labels.extend_from(&b.intent_labels);
    let mut slot_labels = a.slot_labels.clone();
    slot_labels.extend_from(&b.slot_labels);
    let frame_targets = frame_targets(features.frame_count(), &segments);
    Ok(SyntheticUtterance {
        id: a.id.clone(),
        speaker: a.speaker,
        features,
        intent_labels,
        slot_labels,
        segments,
        frame_targets,
    })
}

/// Checks label, segment and target consistency.
pub fn validate_utterance(u: &SyntheticUtterance) -> Result<()> {
    let bad = |m: String| Err(Error::Format(format!("{}: {m}", u.id)));
    let n = u.features.frame_count();
    let mut prev_end = 0;
    for s in &u.segments {
        if s.start < prev_end || s.end <= s.start || s.end > n {
            return bad(format!("segment {s:?} out of order or bounds"));
        }
        prev_end = s.end;
    }
    let intents: Vec<usize> = u.segments.iter().map(|s| s.intent).collect();
    let slots: Vec<usize> = u.segments.iter().map(|s| s.slot).collect();
    if intents != u.intent_labels.labels() || slots != u.slot_labels.labels() {
        return bad("labels disagree with segments".into());
    }
    if u.frame_targets != frame_targets(n, &u.segments) {
        return bad("frame targets disagree with segments".into());
    }
    if u.features.matrix().as_slice().iter().any(|v| !v.is_finite()) {
        return bad("non-finite feature".into());
    }
    Ok(())
}

/// Speaker-disjoint partition of a corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<SyntheticUtterance>,
    pub valid: Vec<SyntheticUtterance>,
    pub test: Vec<SyntheticUtterance>,
}

/// Number of speaker groups per partition, by largest remainder. Every
/// partition with a positive ratio gets at least one group.
pub fn split_counts(groups: usize, ratios: &[f64]) -> Result<Vec<usize>> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(*r >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("ratios must be >= 0 and sum to 1: {ratios:?}")));
    }
    let needed = ratios.iter().filter(|&&r| r > 0.0).count();
    if groups < needed {
        return Err(Error::InvalidArgument(format!(
            "{groups} speaker groups cannot fill {needed} partitions"
        )));
    }
    let exact: Vec<f64> = ratios.iter().map(|r| r * groups as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let mut left = groups - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    for i in 0..counts.len() {
        if ratios[i] > 0.0 && counts[i] == 0 {
            let donor = (0..counts.len()).max_by_key(|&j| counts[j]).expect("non-empty");
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    Ok(counts)
}

/// Assigns whole speaker groups to train/valid/test in the given ratios.
pub fn split(corpus: &[SyntheticUtterance], ratios: [f64; 3], seed: u64) -> Result<Split> {
    let groups: Vec<usize> = corpus
        .iter()
        .map(|u| u.speaker)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let counts = split_counts(groups.len(), &ratios)?;
    let mut shuffled = groups;
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut owner = std::collections::BTreeMap::new();
    let mut k = 0;
    for (part, &c) in counts.iter().enumerate() {
        for &g in &shuffled[k..k + c] {
            owner.insert(g, part);
        }
        k += c;
    }
    let mut out = Split {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
    };
    for u in corpus {
        match owner[&u.speaker] {
            0 => out.train.push(u.clone()),
            1 => out.valid.push(u.clone()),
            _ => out.test.push(u.clone()),
        }
    }
    Ok(out)
}

/// One line of a corpus manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Feature file, relative to the manifest's directory.
    pub features: PathBuf,
    pub intents: LabelSequence,
    pub slots: LabelSequence,
    pub segments: Vec<Segment>,
    pub speaker: usize,
}

/// Writes one feature file per utterance under `dir/feats` and a JSON-lines
/// manifest at `dir/name`. Returns the manifest path.
pub fn write_corpus(dir: &Path, name: &str, corpus: &[SyntheticUtterance]) -> Result<PathBuf> {
    let feats = dir.join("feats");
    fs::create_dir_all(&feats)?;
    let stem = Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or("corpus");
    let manifest = dir.join(name);
    let mut w = BufWriter::new(File::create(&manifest)?);
    for u in corpus {
        let rel = PathBuf::from("feats").join(format!("{stem}-{}.feat", u.id));
        save_features(dir.join(&rel), &u.features)?;
        let entry = ManifestEntry {
            id: u.id.clone(),
            features: rel,
            intents: u.intent_labels.clone(),
            slots: u.slot_labels.clone(),
            segments: u.segments.clone(),
            speaker: u.speaker,
        };
        serde_json::to_writer(&mut w, &entry)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Reads a manifest and every feature file it lists.
pub fn load_corpus(path: &Path) -> Result<Vec<SyntheticUtterance>> {
    let base = path.parent().unwrap_or(Path::new("."));
    read_manifest(path)?
        .into_iter()
        .map(|e| {
            let features = load_features(base.join(&e.features))?;
            let u = SyntheticUtterance {
                frame_targets: frame_targets(features.frame_count(), &e.segments),
                id: e.id,
                speaker: e.speaker,
                features,
                intent_labels: e.intents,
                slot_labels: e.slots,
                segments: e.segments,
            };
            validate_utterance(&u)?;
            Ok(u)
        })
        .collect()
}

/// Nearest-template classifier working directly on features: finds command
/// runs by band energy, then matches part and slot-span means to the
/// templates.
pub struct TemplateOracle {
    spec: CorpusSpec,
    templates: Templates,
}

impl TemplateOracle {
    pub fn new(spec: &CorpusSpec) -> Result<Self> {
        Ok(Self {
            spec: spec.clone(),
            templates: Templates::new(spec)?,
        })
    }

    fn band_mean(x: &FeatureMatrix, range: std::ops::Range<usize>, from: usize, to: usize) -> Vec<f64> {
        let mut m = vec![0.0; range.len()];
        for t in from..to {
            for (a, v) in m.iter_mut().zip(&x.frame(t)[range.clone()]) {
                *a += v;
            }
        }
        let n = (to - from).max(1) as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    fn nearest<'a>(mean: &[f64], candidates: impl Iterator<Item = &'a [f64]>) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, c) in candidates.enumerate() {
            // compare signs so speaker gain and offset do not matter
            let d: f64 = mean.iter().zip(c).map(|(m, c)| (m.signum() - c).powi(2)).sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1 + 1
    }

    /// Finds `[start, end)` runs whose intent band magnitude exceeds the
    /// halfway level.
    pub fn find_commands(&self, x: &FeatureMatrix) -> Vec<(usize, usize)> {
        let di = self.spec.intent_dims();
        let active: Vec<bool> = (0..x.frame_count())
            .map(|t| x.frame(t)[..di].iter().map(|v| v.abs()).sum::<f64>() / di as f64 > 0.5)
            .collect();
        let mut runs = Vec::new();
        let mut t = 0;
        while t < active.len() {
            if active[t] {
                let s = t;
                while t < active.len() && active[t] {
                    t += 1;
                }
                runs.push((s, t));
            } else {
                t += 1;
            }
        }
        runs.retain(|(s, e)| e - s >= self.spec.command_len.0 / 2);
        runs
    }

    /// Classifies a known command span.
    pub fn classify(&self, x: &FeatureMatrix, start: usize, end: usize) -> (usize, usize) {
        let di = self.spec.intent_dims();
        let seg = Segment {
            start,
            end,
            intent: 1,
            slot: 1,
        };
        let mut best = (f64::INFINITY, 1);
        let part_means: Vec<Vec<f64>> = (0..PARTS)
            .map(|p| {
                let a = start + p * (end - start) / PARTS;
                let b = start + (p + 1) * (end - start) / PARTS;
                Self::band_mean(x, 0..di, a, b)
            })
            .collect();
        for (i, parts) in self.templates.intent.iter().enumerate() {
            let d: f64 = parts
                .iter()
                .zip(&part_means)
                .flat_map(|(t, m)| t.iter().zip(m).map(|(t, m)| (m.signum() - t).powi(2)))
                .sum();
            if d < best.0 {
                best = (d, i + 1);
            }
        }
        let (s0, s1) = seg.slot_span();
        let slot_mean = Self::band_mean(x, self.spec.slot_band(), s0, s1);
        let slot = Self::nearest(&slot_mean, self.templates.slot.iter().map(|v| v.as_slice()));
        (best.1, slot)
    }

    /// Intent and slot sequences predicted from features alone.
    pub fn predict(&self, x: &FeatureMatrix) -> (LabelSequence, LabelSequence) {
        let mut intents = LabelSequence::empty();
        let mut slots = LabelSequence::empty();
        for (s, e) in self.find_commands(x) {
            let (i, sl) = self.classify(x, s, e);
            intents.push(i);
            slots.push(sl);
        }
        (intents, slots)
    }
}
