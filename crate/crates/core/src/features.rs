//! Feature-space preprocessing: global CMVN, temporal frame stacking, and the
//! `FEAT` binary container.
//!
//! The container layout is a 20-byte little-endian header
//! `{magic "FEAT", version u32, T u32, D u32, reserved u32}` followed by
//! `T·D` little-endian `f32` values, row-major by frame. CMVN statistics use
//! the same container with `T = 2` (mean row, variance row) and the frame
//! count in the reserved word.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Matrix;

pub const FEAT_MAGIC: [u8; 4] = *b"FEAT";
pub const FEAT_VERSION: u32 = 1;
pub const DEFAULT_CMVN_EPS: f64 = 1e-8;

/// `T × D` matrix of acoustic features, one row per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    frames: Matrix,
}

impl FeatureMatrix {
    pub fn new(frames: Matrix) -> Result<Self> {
        if let Some(bad) = frames.as_slice().iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "feature values must be finite, found {bad}"
            )));
        }
        Ok(Self { frames })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            frames: Matrix::zeros(0, dim),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows))
    }

    pub fn frame_count(&self) -> usize {
        self.frames.rows()
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_count() == 0
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        self.frames.row(t)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.frames
    }

    pub fn into_matrix(self) -> Matrix {
        self.frames
    }

    /// Frames `[start, end)` as a new matrix.
    pub fn slice(&self, start: usize, end: usize) -> FeatureMatrix {
        let d = self.dim();
        let data = self.frames.as_slice()[start * d..end * d].to_vec();
        FeatureMatrix {
            frames: Matrix::from_vec(end - start, d, data),
        }
    }

    /// Appends all frames of `other`. Dimensions must agree.
    pub fn append(&mut self, other: &FeatureMatrix) -> Result<()> {
        if other.is_empty() {
            return Ok(());
        }
        if self.is_empty() {
            *self = other.clone();
            return Ok(());
        }
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        for r in other.frames.iter_rows() {
            self.frames.push_row(r);
        }
        Ok(())
    }

    /// Splits into consecutive chunks of at most `chunk` frames.
    pub fn chunks(&self, chunk: usize) -> Vec<FeatureMatrix> {
        let chunk = chunk.max(1);
        (0..self.frame_count())
            .step_by(chunk)
            .map(|s| self.slice(s, (s + chunk).min(self.frame_count())))
            .collect()
    }
}

/// Corpus-global per-dimension moments.
#[derive(Clone, Debug, PartialEq)]
pub struct CmvnStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub count: u64,
}

/// Streaming accumulator for [`CmvnStats`] (Welford update, Chan merge).
///
/// `merge` is associative up to rounding, so shards can be reduced in any
/// fixed order.
#[derive(Clone, Debug, Default)]
pub struct CmvnAccumulator {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl CmvnAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_frame(&mut self, frame: &[f64]) -> Result<()> {
        if self.count == 0 && self.mean.is_empty() {
            self.mean = vec![0.0; frame.len()];
            self.m2 = vec![0.0; frame.len()];
        }
        if frame.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: frame.len(),
            });
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(frame) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
        Ok(())
    }

    pub fn push(&mut self, x: &FeatureMatrix) -> Result<()> {
        for r in x.matrix().iter_rows() {
            self.push_frame(r)?;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &CmvnAccumulator) -> Result<()> {
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        if other.mean.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: other.mean.len(),
            });
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for d in 0..self.mean.len() {
            let delta = other.mean[d] - self.mean[d];
            self.mean[d] += delta * nb / n;
            self.m2[d] += other.m2[d] + delta * delta * na * nb / n;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn finish(&self) -> Result<CmvnStats> {
        if self.count == 0 {
            return Err(Error::NoFrames);
        }
        let n = self.count as f64;
        Ok(CmvnStats {
            mean: self.mean.clone(),
            variance: self.m2.iter().map(|s| (s / n).max(0.0)).collect(),
            count: self.count,
        })
    }
}

/// Exact corpus-global per-dimension mean and (population) variance.
pub fn accumulate_cmvn<'a, I>(corpus: I) -> Result<CmvnStats>
where
    I: IntoIterator<Item = &'a FeatureMatrix>,
{
    let mut acc = CmvnAccumulator::new();
    for x in corpus {
        acc.push(x)?;
    }
    acc.finish()
}

impl CmvnStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Normalizes one frame in place.
    pub fn normalize_frame(&self, frame: &mut [f64], eps: f64) {
        for ((v, m), var) in frame.iter_mut().zip(&self.mean).zip(&self.variance) {
            *v = (*v - m) / (var + eps).sqrt();
        }
    }

    /// Inverse of [`CmvnStats::normalize_frame`].
    pub fn denormalize_frame(&self, frame: &mut [f64], eps: f64) {
        for ((v, m), var) in frame.iter_mut().zip(&self.mean).zip(&self.variance) {
            *v = *v * (var + eps).sqrt() + m;
        }
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let count = u32::try_from(self.count)
            .map_err(|_| Error::Format("frame count does not fit the reserved u32".into()))?;
        let m = Matrix::from_rows(&[self.mean.as_slice(), self.variance.as_slice()]);
        write_container(w, &m, count)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let (m, count) = read_container(r)?;
        if m.rows() != 2 {
            return Err(Error::Format(format!(
                "cmvn container must have 2 rows, found {}",
                m.rows()
            )));
        }
        Ok(Self {
            mean: m.row(0).to_vec(),
            variance: m.row(1).to_vec(),
            count: u64::from(count),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// `out[t][d] = (x[t][d] − mean[d]) / sqrt(variance[d] + eps)`.
pub fn apply_cmvn(x: &FeatureMatrix, stats: &CmvnStats, eps: f64) -> Result<FeatureMatrix> {
    if x.dim() != stats.dim() {
        return Err(Error::DimensionMismatch {
            expected: stats.dim(),
            got: x.dim(),
        });
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be >= 0, got {eps}")));
    }
    let mut out = x.frames.clone();
    for t in 0..out.rows() {
        stats.normalize_frame(out.row_mut(t), eps);
    }
    Ok(FeatureMatrix { frames: out })
}

/// Number of stacked frames produced from `t` input frames. Partial trailing
/// windows are dropped.
pub fn stacked_len(t: usize, width: usize, stride: usize) -> usize {
    if t < width {
        0
    } else {
        (t - width) / stride + 1
    }
}

/// Concatenates windows of `width` frames taken every `stride` frames.
///
/// Output frame `i` is frames `[i·stride, i·stride + width)` laid end to end,
/// so the output dimension is `width · D`. Inputs shorter than `width` yield
/// an empty matrix of that dimension.
pub fn stack_frames(x: &FeatureMatrix, width: usize, stride: usize) -> Result<FeatureMatrix> {
    if width == 0 || stride == 0 {
        return Err(Error::InvalidArgument(format!(
            "width and stride must be >= 1 (got {width}, {stride})"
        )));
    }
    let d = x.dim();
    let n = stacked_len(x.frame_count(), width, stride);
    let src = x.frames.as_slice();
    let mut data = Vec::with_capacity(n * width * d);
    for i in 0..n {
        let start = i * stride * d;
        data.extend_from_slice(&src[start..start + width * d]);
    }
    Ok(FeatureMatrix {
        frames: Matrix::from_vec(n, width * d, data),
    })
}

fn write_container<W: Write>(w: W, m: &Matrix, reserved: u32) -> Result<()> {
    let mut w = w;
    let t = u32::try_from(m.rows()).map_err(|_| Error::Format("too many frames".into()))?;
    let d = u32::try_from(m.cols()).map_err(|_| Error::Format("dimension too large".into()))?;
    w.write_all(&FEAT_MAGIC)?;
    for word in [FEAT_VERSION, t, d, reserved] {
        w.write_all(&word.to_le_bytes())?;
    }
    for &v in m.as_slice() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_container<R: Read>(mut r: R) -> Result<(Matrix, u32)> {
    let mut header = [0u8; 20];
    r.read_exact(&mut header)?;
    if header[0..4] != FEAT_MAGIC {
        return Err(Error::Format("bad magic, expected FEAT".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != FEAT_VERSION {
        return Err(Error::Format(format!("unsupported FEAT version {version}")));
    }
    let (t, d, reserved) = (word(8) as usize, word(12) as usize, word(16));
    let mut payload = vec![0u8; t * d * 4];
    r.read_exact(&mut payload)?;
    let data = payload
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
        .collect();
    Ok((Matrix::from_vec(t, d, data), reserved))
}

/// Writes features as `f32`. Values that are not exactly representable in
/// `f32` are rounded.
pub fn write_features<W: Write>(w: W, x: &FeatureMatrix) -> Result<()> {
    write_container(w, &x.frames, 0)
}

pub fn read_features<R: Read>(r: R) -> Result<FeatureMatrix> {
    let (m, _) = read_container(r)?;
    FeatureMatrix::new(m)
}

pub fn save_features(path: impl AsRef<Path>, x: &FeatureMatrix) -> Result<()> {
    write_features(BufWriter::new(File::create(path)?), x)
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    read_features(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fm(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn two_point_moments() {
        let s = accumulate_cmvn([&fm(&[&[1.0, 3.0], &[3.0, 5.0]])]).unwrap();
        assert_eq!(s.mean, vec![2.0, 4.0]);
        assert_eq!(s.variance, vec![1.0, 1.0]);
        assert_eq!(s.count, 2);
    }

    #[test]
    fn constant_corpus_has_zero_variance() {
        let x = fm(&[&[0.5, -2.0], &[0.5, -2.0], &[0.5, -2.0]]);
        let s = accumulate_cmvn([&x]).unwrap();
        assert_eq!(s.mean, vec![0.5, -2.0]);
        assert_eq!(s.variance, vec![0.0, 0.0]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(accumulate_cmvn([]), Err(Error::NoFrames)));
        let e = FeatureMatrix::empty(3);
        assert!(matches!(accumulate_cmvn([&e]), Err(Error::NoFrames)));
    }

    #[test]
    fn split_corpus_matches_unsplit() {
        let x = fm(&[&[1.0, 2.0], &[4.0, -1.0], &[0.5, 9.0], &[3.0, 3.0]]);
        let whole = accumulate_cmvn([&x]).unwrap();
        let (a, b) = (x.slice(0, 1), x.slice(1, 4));
        let parts = accumulate_cmvn([&a, &b]).unwrap();
        for d in 0..2 {
            assert!((whole.mean[d] - parts.mean[d]).abs() < 1e-12);
            assert!((whole.variance[d] - parts.variance[d]).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_cmvn_examples() {
        let stats = CmvnStats {
            mean: vec![2.0, 4.0],
            variance: vec![1.0, 1.0],
            count: 2,
        };
        let out = apply_cmvn(&fm(&[&[2.0, 4.0]]), &stats, 0.0).unwrap();
        assert_eq!(out.frame(0), &[0.0, 0.0]);

        let x = fm(&[&[7.0, 1.0], &[7.0, 3.0]]);
        let s = accumulate_cmvn([&x]).unwrap();
        let out = apply_cmvn(&x, &s, 1e-8).unwrap();
        assert_eq!(out.frame(0)[0], 0.0);
        assert_eq!(out.frame(1)[0], 0.0);

        let wrong = fm(&[&[1.0, 2.0, 3.0]]);
        assert!(matches!(
            apply_cmvn(&wrong, &stats, 1e-8),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn standardization_identity() {
        let x = fm(&[&[1.0, 10.0], &[2.0, 20.0], &[6.0, 15.0], &[-3.0, 11.0]]);
        let s = accumulate_cmvn([&x]).unwrap();
        let out = apply_cmvn(&x, &s, 1e-300).unwrap();
        let o = accumulate_cmvn([&out]).unwrap();
        for d in 0..2 {
            assert!(o.mean[d].abs() < 1e-12);
            assert!((o.variance[d] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn stack_examples() {
        let x = FeatureMatrix::new(Matrix::zeros(32, 80)).unwrap();
        let s = stack_frames(&x, 8, 3).unwrap();
        assert_eq!((s.frame_count(), s.dim()), (9, 640));

        let x = FeatureMatrix::new(Matrix::zeros(8, 5)).unwrap();
        let s = stack_frames(&x, 8, 3).unwrap();
        assert_eq!((s.frame_count(), s.dim()), (1, 40));

        let x = FeatureMatrix::new(Matrix::zeros(7, 5)).unwrap();
        assert!(stack_frames(&x, 8, 3).unwrap().is_empty());
    }

    #[test]
    fn stacked_frame_is_window_concatenation() {
        let rows: Vec<Vec<f64>> = (0..10).map(|t| vec![t as f64, -(t as f64)]).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let s = stack_frames(&x, 3, 2).unwrap();
        assert_eq!(s.frame_count(), 4);
        assert_eq!(s.frame(1), &[2.0, -2.0, 3.0, -3.0, 4.0, -4.0]);
    }

    #[test]
    fn stack_length_formula_exhaustive() {
        for t in 1..=64 {
            for width in 1..=64 {
                for stride in 1..=64 {
                    let x = FeatureMatrix::new(Matrix::zeros(t, 1)).unwrap();
                    let s = stack_frames(&x, width, stride).unwrap();
                    let expected = if t >= width { (t - width) / stride + 1 } else { 0 };
                    assert_eq!(s.frame_count(), expected);
                    assert_eq!(s.dim(), width);
                }
            }
        }
    }

    #[test]
    fn feature_container_round_trip() {
        let x = fm(&[&[1.5, -0.25, 3.0], &[0.0, 2.0, -7.125]]);
        let mut buf = Vec::new();
        write_features(&mut buf, &x).unwrap();
        assert_eq!(&buf[0..4], b"FEAT");
        assert_eq!(buf.len(), 20 + 6 * 4);
        assert_eq!(read_features(buf.as_slice()).unwrap(), x);
    }

    #[test]
    fn cmvn_container_carries_count() {
        let stats = CmvnStats {
            mean: vec![0.5, 1.0],
            variance: vec![2.0, 0.25],
            count: 1234,
        };
        let mut buf = Vec::new();
        stats.write_to(&mut buf).unwrap();
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 1234);
        assert_eq!(CmvnStats::read_from(buf.as_slice()).unwrap(), stats);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut buf = Vec::new();
        write_features(&mut buf, &fm(&[&[1.0]])).unwrap();
        buf[0] = b'X';
        assert!(matches!(read_features(buf.as_slice()), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn cmvn_round_trip_recovers_input(
            rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 2..20),
        ) {
            let x = FeatureMatrix::from_rows(&rows).unwrap();
            let s = accumulate_cmvn([&x]).unwrap();
            let eps = DEFAULT_CMVN_EPS;
            let mut y = apply_cmvn(&x, &s, eps).unwrap().into_matrix();
            for t in 0..y.rows() {
                s.denormalize_frame(y.row_mut(t), eps);
            }
            for (a, b) in x.matrix().as_slice().iter().zip(y.as_slice()) {
                let scale = a.abs().max(1.0);
                prop_assert!((a - b).abs() / scale <= 1e-12);
            }
        }

        #[test]
        fn cmvn_invariant_to_order_and_chunking(
            rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 2..30),
            cut in 1usize..29,
        ) {
            let x = FeatureMatrix::from_rows(&rows).unwrap();
            let cut = cut.min(x.frame_count() - 1);
            let whole = accumulate_cmvn([&x]).unwrap();
            let (a, b) = (x.slice(0, cut), x.slice(cut, x.frame_count()));
            let reordered = accumulate_cmvn([&b, &a]).unwrap();
            let mut acc_a = CmvnAccumulator::new();
            acc_a.push(&a).unwrap();
            let mut acc_b = CmvnAccumulator::new();
            acc_b.push(&b).unwrap();
            acc_b.merge(&acc_a).unwrap();
            let merged = acc_b.finish().unwrap();
            for d in 0..2 {
                prop_assert!((whole.mean[d] - reordered.mean[d]).abs() < 1e-12);
                prop_assert!((whole.variance[d] - reordered.variance[d]).abs() < 1e-11);
                prop_assert!((whole.mean[d] - merged.mean[d]).abs() < 1e-12);
                prop_assert!((whole.variance[d] - merged.variance[d]).abs() < 1e-11);
            }
        }
    }
}
