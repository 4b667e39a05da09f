//! Frame-level classification metrics and latent-space cluster quality.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::UNLABELED;
use crate::error::{Error, Result};
use crate::math;
use crate::rng;
use crate::tensor::Tensor;

/// Maximum number of Lloyd iterations.
pub const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct F1Scores {
    pub per_class: Vec<f64>,
    /// Unweighted mean over classes present in the truth.
    pub macro_f1: f64,
    pub support: Vec<usize>,
}

fn check_pair(pred: &[i32], truth: &[i32], n_classes: usize) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::RowCountMismatch {
            features: pred.len(),
            labels: truth.len(),
        });
    }
    for (frame, (&p, &t)) in pred.iter().zip(truth).enumerate() {
        if t != UNLABELED && (t < 0 || t as usize >= n_classes) {
            return Err(Error::LabelOutOfRange {
                label: t as i64,
                frame,
                n_classes,
            });
        }
        if p < 0 || p as usize >= n_classes {
            return Err(Error::LabelOutOfRange {
                label: p as i64,
                frame,
                n_classes,
            });
        }
    }
    Ok(())
}

/// Confusion counts over frames whose true label is known; rows are true
/// classes, columns predictions.
pub fn confusion(pred: &[i32], truth: &[i32], n_classes: usize) -> Result<Vec<Vec<u64>>> {
    check_pair(pred, truth, n_classes)?;
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if t != UNLABELED {
            m[t as usize][p as usize] += 1;
        }
    }
    Ok(m)
}

/// Rows scaled to sum to one; empty rows stay zero.
pub fn normalize_rows(m: &[Vec<u64>]) -> Vec<Vec<f64>> {
    m.iter()
        .map(|row| {
            let s: u64 = row.iter().sum();
            row.iter()
                .map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 })
                .collect()
        })
        .collect()
}

/// Per-class precision/recall F1 and their macro average.
pub fn f1_scores(pred: &[i32], truth: &[i32], n_classes: usize) -> Result<F1Scores> {
    let m = confusion(pred, truth, n_classes)?;
    let support: Vec<usize> = m.iter().map(|r| r.iter().sum::<u64>() as usize).collect();
    if support.iter().all(|&s| s == 0) {
        return Err(Error::NoLabeledFrames);
    }
    let per_class: Vec<f64> = (0..n_classes)
        .map(|k| {
            // 2PR/(P+R) written over counts so rational cases are exact
            let tp = m[k][k] as f64;
            let predicted: u64 = m.iter().map(|r| r[k]).sum();
            let denom = predicted as f64 + support[k] as f64;
            if tp == 0.0 {
                0.0
            } else {
                2.0 * tp / denom
            }
        })
        .collect();
    let present: Vec<f64> = (0..n_classes)
        .filter(|&k| support[k] > 0)
        .map(|k| per_class[k])
        .collect();
    let macro_f1 = present.iter().sum::<f64>() / present.len() as f64;
    Ok(F1Scores {
        per_class,
        macro_f1,
        support,
    })
}

/// Mean prediction entropy (nats) of true and false positives per predicted
/// class. Cells without frames are `None`.
pub fn prediction_entropy(
    probs: &Tensor,
    pred: &[i32],
    truth: &[i32],
) -> Result<(Vec<Option<f64>>, Vec<Option<f64>>)> {
    let k = probs.cols();
    check_pair(pred, truth, k)?;
    if probs.rows() != pred.len() {
        return Err(Error::RowCountMismatch {
            features: probs.rows(),
            labels: pred.len(),
        });
    }
    let mut sums = [vec![0.0; k], vec![0.0; k]];
    let mut counts = [vec![0usize; k], vec![0usize; k]];
    for t in 0..pred.len() {
        if truth[t] == UNLABELED {
            continue;
        }
        let c = pred[t] as usize;
        let cell = usize::from(pred[t] != truth[t]);
        sums[cell][c] += math::entropy(probs.row(t));
        counts[cell][c] += 1;
    }
    let mean = |cell: usize| -> Vec<Option<f64>> {
        (0..k)
            .map(|c| (counts[cell][c] > 0).then(|| sums[cell][c] / counts[cell][c] as f64))
            .collect()
    };
    Ok((mean(0), mean(1)))
}

/// Everything `evaluate` reports for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
    pub confusion: Vec<Vec<u64>>,
    pub entropy_tp: Vec<Option<f64>>,
    pub entropy_fp: Vec<Option<f64>>,
    pub support: Vec<usize>,
}

pub fn evaluate(probs: &Tensor, pred: &[i32], truth: &[i32]) -> Result<EvalReport> {
    let k = probs.cols();
    let f1 = f1_scores(pred, truth, k)?;
    let (entropy_tp, entropy_fp) = prediction_entropy(probs, pred, truth)?;
    Ok(EvalReport {
        per_class_f1: f1.per_class,
        macro_f1: f1.macro_f1,
        confusion: confusion(pred, truth, k)?,
        entropy_tp,
        entropy_fp,
        support: f1.support,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by Lloyd iterations until assignments stop
/// changing or [`KMEANS_MAX_ITER`] is reached.
pub fn kmeans(points: &Tensor, n_clusters: usize, seed: u64) -> Result<Vec<usize>> {
    let n = points.rows();
    if n_clusters == 0 || n < n_clusters {
        return Err(Error::OutOfRange {
            what: "n_clusters",
            detail: alloc::format!("{n_clusters} clusters for {n} points"),
        });
    }
    let mut r = rng::seeded(seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(n_clusters);
    centers.push(points.row(r.random_range(0..n)).to_vec());
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), &centers[0])).collect();
    while centers.len() < n_clusters {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let u: f64 = r.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if u < acc && d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // every point already coincides with a centre
            r.random_range(0..n)
        };
        centers.push(points.row(next).to_vec());
        let c = centers.last().expect("just pushed");
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), c));
        }
    }

    let dim = points.cols();
    let mut assign = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, a) in assign.iter_mut().enumerate() {
            let p = points.row(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centre) in centers.iter().enumerate() {
                let d = sq_dist(p, centre);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; n_clusters];
        let mut counts = vec![0usize; n_clusters];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        for c in 0..n_clusters {
            // empty clusters keep their previous centre
            if counts[c] > 0 {
                for (dst, s) in centers[c].iter_mut().zip(&sums[c]) {
                    *dst = s / counts[c] as f64;
                }
            }
        }
    }
    Ok(assign)
}

/// Sum of squared distances to cluster means.
pub fn inertia(points: &Tensor, assign: &[usize]) -> f64 {
    let k = assign.iter().copied().max().map_or(0, |m| m + 1);
    let dim = points.cols();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (i, &a) in assign.iter().enumerate() {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(points.row(i)) {
            *s += v;
        }
    }
    assign
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let mean: Vec<f64> = sums[a].iter().map(|s| s / counts[a] as f64).collect();
            sq_dist(points.row(i), &mean)
        })
        .sum()
}

fn entropy_of_counts(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    -counts
        .iter()
        .map(|&c| math::xlogx(c as f64 / n as f64))
        .sum::<f64>()
}

/// Contingency table with dense relabeling of both label sets.
fn contingency(a: &[usize], b: &[usize]) -> Result<Vec<Vec<usize>>> {
    if a.len() != b.len() {
        return Err(Error::RowCountMismatch {
            features: a.len(),
            labels: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidConfig("cluster scores need at least one point".into()));
    }
    let na = a.iter().copied().max().unwrap_or(0) + 1;
    let nb = b.iter().copied().max().unwrap_or(0) + 1;
    let mut m = vec![vec![0usize; nb]; na];
    for (&i, &j) in a.iter().zip(b) {
        m[i][j] += 1;
    }
    Ok(m)
}

/// `1 − H(A|B)/H(A)`; one when `H(A) = 0`.
fn conditional_score(m: &[Vec<usize>]) -> f64 {
    let nb = m.first().map_or(0, |r| r.len());
    let a_counts: Vec<usize> = m.iter().map(|r| r.iter().sum()).collect();
    let h_a = entropy_of_counts(&a_counts);
    if h_a == 0.0 {
        return 1.0;
    }
    let n: usize = a_counts.iter().sum();
    let mut h_ab = 0.0;
    for j in 0..nb {
        let col: Vec<usize> = m.iter().map(|r| r[j]).collect();
        let nj: usize = col.iter().sum();
        if nj > 0 {
            h_ab += nj as f64 / n as f64 * entropy_of_counts(&col);
        }
    }
    (1.0 - h_ab / h_a).clamp(0.0, 1.0)
}

/// Each cluster contains only members of a single class.
pub fn homogeneity(clusters: &[usize], classes: &[usize]) -> Result<f64> {
    Ok(conditional_score(&contingency(classes, clusters)?))
}

/// All members of a class are assigned to the same cluster.
pub fn completeness(clusters: &[usize], classes: &[usize]) -> Result<f64> {
    Ok(conditional_score(&contingency(clusters, classes)?))
}

/// Harmonic mean of homogeneity and completeness.
pub fn v_measure(clusters: &[usize], classes: &[usize]) -> Result<f64> {
    let h = homogeneity(clusters, classes)?;
    let c = completeness(clusters, classes)?;
    Ok(if h + c == 0.0 { 0.0 } else { 2.0 * h * c / (h + c) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    pub n_clusters: Vec<usize>,
    pub homogeneity: Vec<f64>,
    pub completeness: Vec<f64>,
    pub v_measure: Vec<f64>,
    pub seed: u64,
}

/// Cluster counts `K, 2K, 4K, 8K`.
pub fn default_grid(n_classes: usize) -> Vec<usize> {
    vec![n_classes, 2 * n_classes, 4 * n_classes, 8 * n_classes]
}

/// k-means cluster quality at each grid point. Frames with unknown labels are
/// dropped first.
pub fn cluster_sweep(latents: &Tensor, labels: &[i32], grid: &[usize], seed: u64) -> Result<ClusterReport> {
    if latents.rows() != labels.len() {
        return Err(Error::RowCountMismatch {
            features: latents.rows(),
            labels: labels.len(),
        });
    }
    let keep: Vec<usize> = (0..labels.len()).filter(|&t| labels[t] >= 0).collect();
    let mut pts = Vec::with_capacity(keep.len() * latents.cols());
    for &t in &keep {
        pts.extend_from_slice(latents.row(t));
    }
    let pts = Tensor::from_vec(keep.len(), latents.cols(), pts)?;
    let classes: Vec<usize> = keep.iter().map(|&t| labels[t] as usize).collect();
    let mut report = ClusterReport {
        n_clusters: grid.to_vec(),
        homogeneity: Vec::with_capacity(grid.len()),
        completeness: Vec::with_capacity(grid.len()),
        v_measure: Vec::with_capacity(grid.len()),
        seed,
    };
    for &k in grid {
        let assign = kmeans(&pts, k, seed)?;
        let h = homogeneity(&assign, &classes)?;
        let c = completeness(&assign, &classes)?;
        report.homogeneity.push(h);
        report.completeness.push(c);
        report.v_measure.push(if h + c == 0.0 { 0.0 } else { 2.0 * h * c / (h + c) });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_f1_four_sevenths() {
        // class 1: TP=2, FP=1, FN=2 so P=2/3 and R=2/4
        let truth = [1, 1, 1, 1, 0];
        let pred = [1, 1, 0, 0, 1];
        let f = f1_scores(&pred, &truth, 2).unwrap();
        assert_eq!(f.per_class[1], 4.0 / 7.0);
    }

    #[test]
    fn absent_class_excluded_from_macro() {
        let f = f1_scores(&[0, 1, 1], &[0, 1, 1], 3).unwrap();
        assert_eq!(f.per_class[2], 0.0);
        assert_eq!(f.macro_f1, 1.0);
    }

    #[test]
    fn unknown_frames_are_ignored() {
        let f = f1_scores(&[0, 1, 0], &[0, 1, -1], 2).unwrap();
        assert_eq!(f.macro_f1, 1.0);
        assert!(f1_scores(&[0], &[-1], 2).is_err());
    }

    #[test]
    fn confusion_all_zero_prediction() {
        let m = confusion(&[0, 0, 0], &[0, 1, 1], 2).unwrap();
        assert_eq!(m, vec![vec![1, 0], vec![2, 0]]);
        assert_eq!(normalize_rows(&m)[1], vec![1.0, 0.0]);
    }

    #[test]
    fn entropy_cells() {
        let probs = Tensor::from_rows(&[
            [1.0, 0.0],
            [0.5, 0.5],
            [0.9, 0.1],
            [0.2, 0.8],
        ])
        .unwrap();
        let (tp, fp) = prediction_entropy(&probs, &[0, 0, 0, 1], &[0, 1, 0, -1]).unwrap();
        let h = |p: &[f64]| math::entropy(p);
        assert!((tp[0].unwrap() - (0.0 + h(&[0.9, 0.1])) / 2.0).abs() < 1e-15);
        assert!((fp[0].unwrap() - h(&[0.5, 0.5])).abs() < 1e-15);
        assert_eq!(tp[1], None);
        assert_eq!(fp[1], None);
    }

    #[test]
    fn homogeneity_hand_table() {
        let clusters = [0, 0, 0, 1, 1];
        let classes = [0, 0, 1, 1, 1];
        let hc = math::entropy(&[0.6, 0.4]);
        let hck = 0.6 * math::entropy(&[2.0 / 3.0, 1.0 / 3.0]);
        let h = homogeneity(&clusters, &classes).unwrap();
        assert!((h - (1.0 - hck / hc)).abs() < 1e-14);
        assert_eq!(homogeneity(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(homogeneity(&[0, 1, 2, 2], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(homogeneity(&[0, 1], &[3, 3]).unwrap(), 1.0);
    }

    #[test]
    fn kmeans_edge_cases() {
        let pts = Tensor::from_rows(&[[0.0], [1.0], [5.0], [9.0]]).unwrap();
        assert_eq!(kmeans(&pts, 1, 0).unwrap(), vec![0; 4]);
        let a = kmeans(&pts, 4, 3).unwrap();
        assert_eq!(inertia(&pts, &a), 0.0);
        let mut s = a.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 4);
        let same = Tensor::full(5, 2, 1.5);
        assert_eq!(kmeans(&same, 3, 1).unwrap(), vec![0; 5]);
        assert!(kmeans(&pts, 5, 0).is_err());
    }

    #[test]
    fn kmeans_separates_blobs() {
        let mut r = rng::seeded(4);
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for i in 0..200 {
            let c = (i % 2) as f64 * 20.0;
            rows.push([c + rng::standard_normal(&mut r), c + rng::standard_normal(&mut r)]);
            truth.push(i % 2);
        }
        let a = kmeans(&Tensor::from_rows(&rows).unwrap(), 2, 9).unwrap();
        assert_eq!(homogeneity(&a, &truth).unwrap(), 1.0);
        assert_eq!(completeness(&a, &truth).unwrap(), 1.0);
    }
}
