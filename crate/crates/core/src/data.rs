//! Feature sequences, featurization, standardization and batching.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::math;
use crate::rng;
use crate::tensor::Tensor;

/// Label value marking a frame without an annotation.
pub const UNLABELED: i32 = -1;

/// Lower bound applied to per-feature standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// One recording: `[T × D]` features plus one label per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub id: String,
    pub features: Tensor,
    pub sample_rate_hz: f64,
    /// `-1` for unlabeled frames, otherwise a class in `0..K`.
    pub labels: Vec<i32>,
}

impl FeatureSequence {
    /// Builds a sequence; `labels = None` marks every frame unlabeled.
    pub fn new(
        id: impl Into<String>,
        features: Tensor,
        sample_rate_hz: f64,
        labels: Option<Vec<i32>>,
    ) -> Result<Self> {
        let t = features.rows();
        let labels = labels.unwrap_or_else(|| vec![UNLABELED; t]);
        let seq = Self {
            id: id.into(),
            features,
            sample_rate_hz,
            labels,
        };
        seq.validate(None)?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Checks shape, finiteness and, when `n_classes` is given, label range.
    pub fn validate(&self, n_classes: Option<usize>) -> Result<()> {
        let (t, d) = self.features.shape();
        if t == 0 || d == 0 {
            return Err(Error::OutOfRange {
                what: "sequence shape",
                detail: format!("{}: need T ≥ 1 and D ≥ 1, got {t}×{d}", self.id),
            });
        }
        if !self.features.is_finite() {
            return Err(Error::NonFinite("features"));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::OutOfRange {
                what: "sample rate",
                detail: format!("{}: {}", self.id, self.sample_rate_hz),
            });
        }
        if self.labels.len() != t {
            return Err(Error::RowCountMismatch {
                features: t,
                labels: self.labels.len(),
            });
        }
        for (frame, &label) in self.labels.iter().enumerate() {
            let ok = match n_classes {
                Some(k) => label == UNLABELED || (label >= 0 && (label as usize) < k),
                None => label >= UNLABELED,
            };
            if !ok {
                return Err(Error::LabelOutOfRange {
                    label: label as i64,
                    frame,
                    n_classes: n_classes.unwrap_or(0),
                });
            }
        }
        Ok(())
    }

    pub fn n_labeled(&self) -> usize {
        self.labels.iter().filter(|&&l| l != UNLABELED).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<FeatureSequence>,
    pub test: Vec<FeatureSequence>,
    pub n_classes: usize,
}

impl DatasetSplit {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_classes must be at least 2, got {}",
                self.n_classes
            )));
        }
        for s in self.train.iter().chain(&self.test) {
            s.validate(Some(self.n_classes))?;
        }
        for a in &self.train {
            if self.test.iter().any(|b| b.id == a.id) {
                return Err(Error::InvalidConfig(format!(
                    "sequence `{}` is in both train and test",
                    a.id
                )));
            }
        }
        let dims: Vec<usize> = self.train.iter().chain(&self.test).map(|s| s.dim()).collect();
        if dims.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::InvalidConfig("sequences differ in feature dimension".into()));
        }
        Ok(())
    }
}

/// Concatenates `x_t` with its first difference `x_t − x_{t−1}`; the first
/// frame's velocity is zero.
pub fn position_velocity(x: &Tensor) -> Tensor {
    let (t, d) = x.shape();
    let mut out = Tensor::zeros(t, 2 * d);
    for i in 0..t {
        let row = out.row_mut(i);
        row[..d].copy_from_slice(x.row(i));
        if i > 0 {
            for j in 0..d {
                row[d + j] = x.get(i, j) - x.get(i - 1, j);
            }
        }
    }
    out
}

/// Per-feature z-scoring with training-set statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation over all frames of `train`.
    pub fn fit(train: &[FeatureSequence]) -> Result<Self> {
        let mats: Vec<&Tensor> = train.iter().map(|s| &s.features).collect();
        Self::fit_matrices(&mats)
    }

    pub fn fit_matrices(mats: &[&Tensor]) -> Result<Self> {
        let n: usize = mats.iter().map(|m| m.rows()).sum();
        if n == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        let d = mats[0].cols();
        let mut mean = vec![0.0; d];
        for m in mats {
            for i in 0..m.rows() {
                for (a, v) in mean.iter_mut().zip(m.row(i)) {
                    *a += v;
                }
            }
        }
        mean.iter_mut().for_each(|a| *a /= n as f64);
        let mut var = vec![0.0; d];
        for m in mats {
            for i in 0..m.rows() {
                for ((a, v), mu) in var.iter_mut().zip(m.row(i)).zip(&mean) {
                    *a += (v - mu) * (v - mu);
                }
            }
        }
        let std = var
            .iter()
            .map(|v| math::sqrt(v / n as f64).max(STD_FLOOR))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, mu), sd) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - mu) / sd;
            }
        }
        out
    }

    pub fn inverse(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, mu), sd) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * sd + mu;
            }
        }
        out
    }
}

/// Smallest number of principal components whose cumulative explained
/// variance ratio reaches `variance_threshold`.
pub fn select_latent_dim(features: &Tensor, variance_threshold: f64) -> Result<usize> {
    if !(variance_threshold > 0.0 && variance_threshold <= 1.0) {
        return Err(Error::OutOfRange {
            what: "variance threshold",
            detail: format!("{variance_threshold} not in (0, 1]"),
        });
    }
    if features.rows() == 0 || features.cols() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let ev: Vec<f64> = linalg::symmetric_eigenvalues(&linalg::covariance(features))
        .into_iter()
        .map(|e| e.max(0.0))
        .collect();
    let total: f64 = ev.iter().sum();
    if total <= 0.0 {
        return Ok(1);
    }
    let mut acc = 0.0;
    for (i, e) in ev.iter().enumerate() {
        acc += e;
        if acc / total >= variance_threshold - 1e-12 {
            return Ok(i + 1);
        }
    }
    Ok(ev.len())
}

/// Keeps labels only on `n_videos` sequences chosen at random; the rest
/// become fully unlabeled but stay in the set as unlabeled data.
pub fn subsample_labeled_videos(
    train: &[FeatureSequence],
    n_videos: usize,
    seed: u64,
) -> Result<Vec<FeatureSequence>> {
    if n_videos == 0 || n_videos > train.len() {
        return Err(Error::OutOfRange {
            what: "n_videos",
            detail: format!("{n_videos} not in 1..={}", train.len()),
        });
    }
    let mut rng = rng::seeded(seed);
    let chosen = index::sample(&mut rng, train.len(), n_videos).into_vec();
    Ok(train
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut s = s.clone();
            if !chosen.contains(&i) {
                s.labels.iter_mut().for_each(|l| *l = UNLABELED);
            }
            s
        })
        .collect())
}

/// Keeps each existing label independently with probability `fraction`.
pub fn subsample_labeled_frames(seq: &FeatureSequence, fraction: f64, seed: u64) -> FeatureSequence {
    let mut rng = rng::seeded(seed);
    let mut out = seq.clone();
    for l in &mut out.labels {
        if rng.random::<f64>() >= fraction {
            *l = UNLABELED;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameMask {
    Labeled,
    Unlabeled,
    Padded,
}

/// One fixed-length training window. Padding, if any, follows the valid
/// prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub features: Tensor,
    pub labels: Vec<i32>,
    pub mask: Vec<FrameMask>,
    pub valid_len: usize,
    pub sequence: usize,
    pub start: usize,
}

impl Window {
    /// The unpadded frames.
    pub fn valid_features(&self) -> Tensor {
        self.features.slice_rows(0, self.valid_len)
    }

    pub fn valid_labels(&self) -> &[i32] {
        &self.labels[..self.valid_len]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub windows: Vec<Window>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn n_valid(&self) -> usize {
        self.windows.iter().map(|w| w.valid_len).sum()
    }
}

/// One epoch of batches. Windows tile each sequence from its start with
/// stride `window`; their order is shuffled with `seed`.
pub struct Batches<'a> {
    train: &'a [FeatureSequence],
    order: Vec<(usize, usize)>,
    window: usize,
    batch_size: usize,
    next: usize,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.batch_size).min(self.order.len());
        let windows = self.order[self.next..end]
            .iter()
            .map(|&(si, start)| cut_window(&self.train[si], si, start, self.window))
            .collect();
        self.next = end;
        Some(Batch { windows })
    }
}

fn cut_window(seq: &FeatureSequence, si: usize, start: usize, window: usize) -> Window {
    let d = seq.dim();
    let valid_len = (seq.len() - start).min(window);
    let mut features = Tensor::zeros(window, d);
    features.data_mut()[..valid_len * d]
        .copy_from_slice(&seq.features.data()[start * d..(start + valid_len) * d]);
    let mut labels = vec![UNLABELED; window];
    labels[..valid_len].copy_from_slice(&seq.labels[start..start + valid_len]);
    let mask = (0..window)
        .map(|i| {
            if i >= valid_len {
                FrameMask::Padded
            } else if labels[i] == UNLABELED {
                FrameMask::Unlabeled
            } else {
                FrameMask::Labeled
            }
        })
        .collect();
    Window {
        features,
        labels,
        mask,
        valid_len,
        sequence: si,
        start,
    }
}

pub fn make_batches(
    train: &[FeatureSequence],
    batch_size: usize,
    window: usize,
    seed: u64,
) -> Result<Batches<'_>> {
    if train.is_empty() || train.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyTrainingSet);
    }
    if batch_size == 0 || window == 0 {
        return Err(Error::OutOfRange {
            what: "batching",
            detail: format!("batch_size={batch_size}, window={window}"),
        });
    }
    let mut order: Vec<(usize, usize)> = train
        .iter()
        .enumerate()
        .flat_map(|(si, s)| (0..s.len()).step_by(window).map(move |st| (si, st)))
        .collect();
    order.shuffle(&mut rng::seeded(seed));
    Ok(Batches {
        train,
        order,
        window,
        batch_size,
        next: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(id: &str, t: usize, d: usize, seed: u64) -> FeatureSequence {
        let mut r = rng::seeded(seed);
        FeatureSequence::new(id, rng::normal_tensor(t, d, &mut r), 30.0, None).unwrap()
    }

    #[test]
    fn missing_labels_default_to_unlabeled() {
        let s = FeatureSequence::new("a", Tensor::zeros(3, 2), 10.0, None).unwrap();
        assert_eq!(s.labels, [-1, -1, -1]);
        let s = FeatureSequence::new("a", Tensor::zeros(3, 2), 10.0, Some(vec![0, 1, -1])).unwrap();
        assert_eq!(s.labels, [0, 1, -1]);
        let err = FeatureSequence::new("a", Tensor::zeros(3, 2), 10.0, Some(vec![0; 4]));
        assert!(matches!(err, Err(Error::RowCountMismatch { features: 3, labels: 4 })));
    }

    #[test]
    fn label_range_checked_against_classes() {
        let s = FeatureSequence::new("a", Tensor::zeros(2, 1), 10.0, Some(vec![0, 3])).unwrap();
        assert!(s.validate(Some(3)).is_err());
        assert!(s.validate(Some(4)).is_ok());
        assert!(FeatureSequence::new("a", Tensor::zeros(1, 1), 10.0, Some(vec![-2])).is_err());
    }

    #[test]
    fn position_velocity_small_case() {
        let x = Tensor::column_vector(&[1.0, 3.0, 6.0]);
        let pv = position_velocity(&x);
        assert_eq!(pv.data(), &[1.0, 0.0, 3.0, 2.0, 6.0, 3.0]);
        let c = Tensor::full(5, 2, 4.2);
        let pv = position_velocity(&c);
        assert!((0..5).all(|i| pv.get(i, 2) == 0.0 && pv.get(i, 3) == 0.0));
    }

    #[test]
    fn standardizer_two_point_and_constant_column() {
        let s = FeatureSequence::new(
            "a",
            Tensor::from_rows(&[[0.0, 5.0], [2.0, 5.0]]).unwrap(),
            1.0,
            None,
        )
        .unwrap();
        let st = Standardizer::fit(&[s.clone()]).unwrap();
        assert_eq!(st.mean, [1.0, 5.0]);
        assert_eq!(st.std[0], 1.0);
        assert_eq!(st.std[1], STD_FLOOR);
        let z = st.apply(&s.features);
        assert_eq!(z.data(), &[-1.0, 0.0, 1.0, 0.0]);
        assert!(Standardizer::fit(&[]).is_err());
    }

    #[test]
    fn standardized_training_data_has_unit_moments() {
        let train = [seq("a", 50, 3, 1), seq("b", 70, 3, 2)];
        let st = Standardizer::fit(&train).unwrap();
        let z: Vec<FeatureSequence> = train
            .iter()
            .map(|s| FeatureSequence {
                features: st.apply(&s.features),
                ..s.clone()
            })
            .collect();
        let again = Standardizer::fit(&z).unwrap();
        for j in 0..3 {
            assert!(again.mean[j].abs() < 1e-10);
            assert!((again.std[j] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn latent_dim_from_spectrum() {
        // axis-aligned data with variances 0.9, 0.06, 0.04
        let mut r = rng::seeded(8);
        let n = 20_000;
        let raw = rng::normal_tensor(n, 3, &mut r);
        let mut rows = Vec::new();
        for i in 0..n / 2 {
            let a = raw.row(i);
            rows.push([a[0] * 0.9f64.sqrt(), a[1] * 0.06f64.sqrt(), a[2] * 0.04f64.sqrt()]);
            rows.push([-a[0] * 0.9f64.sqrt(), -a[1] * 0.06f64.sqrt(), -a[2] * 0.04f64.sqrt()]);
        }
        let x = Tensor::from_rows(&rows).unwrap();
        assert_eq!(select_latent_dim(&x, 0.95).unwrap(), 2);
        assert_eq!(select_latent_dim(&x, 0.5).unwrap(), 1);
        assert!(select_latent_dim(&x, 0.0).is_err());
        assert_eq!(select_latent_dim(&Tensor::zeros(10, 4), 0.95).unwrap(), 1);
    }

    #[test]
    fn isotropic_data_needs_all_dims() {
        // ±e_i for each axis: covariance is exactly I/4·2
        let mut rows = Vec::new();
        for i in 0..4 {
            let mut v = [0.0; 4];
            v[i] = 1.0;
            rows.push(v);
            v[i] = -1.0;
            rows.push(v);
        }
        let x = Tensor::from_rows(&rows).unwrap();
        assert_eq!(select_latent_dim(&x, 0.95).unwrap(), 4);
    }

    #[test]
    fn subsample_videos() {
        let train: Vec<FeatureSequence> = (0..5)
            .map(|i| {
                let mut s = seq(&format!("s{i}"), 4, 1, i);
                s.labels = vec![0, 1, 0, 1];
                s
            })
            .collect();
        assert_eq!(subsample_labeled_videos(&train, 5, 1).unwrap(), train);
        assert!(subsample_labeled_videos(&train, 0, 1).is_err());
        assert!(subsample_labeled_videos(&train, 6, 1).is_err());
        let a = subsample_labeled_videos(&train, 2, 7).unwrap();
        assert_eq!(a, subsample_labeled_videos(&train, 2, 7).unwrap());
        assert_eq!(a.iter().filter(|s| s.n_labeled() > 0).count(), 2);
        for (x, y) in a.iter().zip(&train) {
            assert_eq!(x.features, y.features);
        }
        let mut covered = [false; 5];
        for seed in 0..100 {
            for (i, s) in subsample_labeled_videos(&train, 2, seed).unwrap().iter().enumerate() {
                covered[i] |= s.n_labeled() > 0;
            }
        }
        assert!(covered.iter().all(|&c| c));
    }

    #[test]
    fn batches_tile_and_pad() {
        let long = [seq("a", 2000, 2, 1)];
        let b: Vec<Batch> = make_batches(&long, 8, 1000, 3).unwrap().collect();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].len(), 2);
        assert!(b[0].windows.iter().all(|w| w.valid_len == 1000));

        let short = [seq("b", 600, 2, 1)];
        let w = &make_batches(&short, 8, 1000, 3).unwrap().next().unwrap().windows[0];
        assert_eq!(w.valid_len, 600);
        assert_eq!(w.mask.iter().filter(|&&m| m == FrameMask::Padded).count(), 400);
        assert!(w.features.row(700).iter().all(|&v| v == 0.0));
        assert!(make_batches(&[], 8, 1000, 0).is_err());
    }

    #[test]
    fn epoch_covers_every_frame_once() {
        let train: Vec<FeatureSequence> = (0..10).map(|i| seq("s", 1000, 1, i)).collect();
        let mut counts = vec![vec![0u32; 1000]; 10];
        let batches: Vec<Batch> = make_batches(&train, 8, 1000, 5).unwrap().collect();
        assert_eq!(batches.iter().map(Batch::len).collect::<Vec<_>>(), [8, 2]);
        for b in &batches {
            for w in &b.windows {
                for t in 0..w.valid_len {
                    counts[w.sequence][w.start + t] += 1;
                }
            }
        }
        assert!(counts.iter().flatten().all(|&c| c == 1));
    }
}
