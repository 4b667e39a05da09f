//! Training objectives.
//!
//! ELBO builders return their pieces separately as scalar graph nodes so the
//! training loop can log them and locate a non-finite term:
//! `ELBO = reconstruction − z_kl − y_kl`. `z_kl` collects the continuous
//! latent KLs; `y_kl` collects the discrete-state terms (the initial-state
//! KL, the transition KLs and, for observed labels, the negative
//! log-probabilities they reduce to).
//!
//! The marginal builders take a per-frame class distribution `r` (`[T × K]`).
//! Passing the classifier output gives the unlabeled bound; passing one-hot
//! rows on labeled frames gives the semi-supervised bound. Each
//! reparameterized sample `z̃_t^k` is drawn once per frame and class and
//! reused by every term that references it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::UNLABELED;
use crate::error::{Error, Result};
use crate::generative::{gaussian_kl_rows, GmdgmParams, SldsParams};
use crate::graph::{Graph, Var};
use crate::inference::{reparam_graph, PosteriorOutputs, ReparamNoise};
use crate::math;
use crate::params::Bound;
use crate::tensor::Tensor;

/// Weights of the semi-supervised objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    /// Weight of the labeled log-likelihood of the classifier.
    pub alpha: f64,
    /// Multiplier on every KL-bearing term, in `[0, 1]`.
    pub kl_anneal: f64,
    /// Per-class weights for the classification terms.
    pub class_weights: Vec<f64>,
}

impl LossWeights {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.class_weights.len() != n_classes {
            return Err(Error::DimensionMismatch {
                expected: n_classes,
                found: self.class_weights.len(),
            });
        }
        if self.class_weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidConfig("class weights must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.kl_anneal) {
            return Err(Error::InvalidConfig("kl_anneal must lie in [0, 1]".into()));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidConfig("alpha must be non-negative".into()));
        }
        Ok(())
    }
}

/// Linear ramp from 0 to 1 over `anneal_epochs`, then constant.
pub fn anneal_weight(epoch: usize, anneal_epochs: usize) -> f64 {
    if anneal_epochs == 0 {
        return 1.0;
    }
    (epoch as f64 / anneal_epochs as f64).min(1.0)
}

/// `w_k ∝ 1 / count_k`, normalized to mean one over the classes that occur.
/// Classes without labeled frames get weight one.
pub fn class_weights<'a>(labels: impl IntoIterator<Item = &'a [i32]>, n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for seq in labels {
        for &y in seq {
            if y >= 0 && (y as usize) < n_classes {
                counts[y as usize] += 1;
            }
        }
    }
    let inv: Vec<f64> = counts
        .iter()
        .map(|&c| if c > 0 { 1.0 / c as f64 } else { 0.0 })
        .collect();
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present == 0 {
        return vec![1.0; n_classes];
    }
    let mean = inv.iter().sum::<f64>() / present as f64;
    inv.iter()
        .map(|&w| if w > 0.0 { w / mean } else { 1.0 })
        .collect()
}

fn check_labels(labels: &[i32], n_classes: usize) -> Result<()> {
    for (t, &y) in labels.iter().enumerate() {
        if y != UNLABELED && !(y >= 0 && (y as usize) < n_classes) {
            return Err(Error::LabelOutOfRange {
                label: y as i64,
                frame: t,
                n_classes,
            });
        }
    }
    Ok(())
}

/// Weighted cross-entropy `−Σ w_{y_t} log p[t, y_t] / Σ w_{y_t}` over labeled
/// frames. The flag is `false` when no frame is labeled, in which case the
/// loss is zero.
pub fn classification_loss(probs: &Tensor, labels: &[i32], class_weights: &[f64]) -> Result<(f64, bool)> {
    if probs.rows() != labels.len() {
        return Err(Error::RowCountMismatch {
            features: probs.rows(),
            labels: labels.len(),
        });
    }
    check_labels(labels, probs.cols())?;
    let (mut num, mut den) = (0.0, 0.0);
    for (t, &y) in labels.iter().enumerate() {
        if y == UNLABELED {
            continue;
        }
        let w = class_weights[y as usize];
        num -= w * math::ln(probs.get(t, y as usize));
        den += w;
    }
    if den == 0.0 {
        return Ok((0.0, false));
    }
    Ok((num / den, true))
}

/// Per-frame mixture of one-hot label vectors and classifier rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RDistribution {
    pub probs: Tensor,
    pub labeled: Vec<bool>,
}

pub fn build_r_distribution(classifier_probs: &Tensor, labels: &[i32]) -> Result<RDistribution> {
    if classifier_probs.rows() != labels.len() {
        return Err(Error::RowCountMismatch {
            features: classifier_probs.rows(),
            labels: labels.len(),
        });
    }
    let k = classifier_probs.cols();
    check_labels(labels, k)?;
    let mut probs = classifier_probs.clone();
    let mut labeled = Vec::with_capacity(labels.len());
    for (t, &y) in labels.iter().enumerate() {
        if y == UNLABELED {
            labeled.push(false);
        } else {
            for (j, v) in probs.row_mut(t).iter_mut().enumerate() {
                *v = if j == y as usize { 1.0 } else { 0.0 };
            }
            labeled.push(true);
        }
    }
    Ok(RDistribution { probs, labeled })
}

/// Graph form of [`build_r_distribution`]: gradients reach the classifier
/// only through unlabeled rows.
pub fn r_graph(g: &mut Graph, q_probs: Var, labels: &[i32]) -> Result<Var> {
    let (t_len, k) = g.shape(q_probs);
    if t_len != labels.len() {
        return Err(Error::RowCountMismatch {
            features: t_len,
            labels: labels.len(),
        });
    }
    check_labels(labels, k)?;
    let mut keep = Tensor::zeros(t_len, k);
    let mut onehot = Tensor::zeros(t_len, k);
    for (t, &y) in labels.iter().enumerate() {
        if y == UNLABELED {
            keep.row_mut(t).fill(1.0);
        } else {
            onehot.set(t, y as usize, 1.0);
        }
    }
    let kept = g.mul_const(q_probs, keep);
    let oh = g.constant(onehot);
    Ok(g.add(kept, oh))
}

/// `Σ_{t labeled} w_{y_t} log q(y_t | x)` and the total weight.
pub fn weighted_label_log_lik(
    g: &mut Graph,
    log_probs: Var,
    labels: &[i32],
    class_weights: &[f64],
) -> Result<(Var, f64)> {
    let (t_len, k) = g.shape(log_probs);
    if t_len != labels.len() {
        return Err(Error::RowCountMismatch {
            features: t_len,
            labels: labels.len(),
        });
    }
    check_labels(labels, k)?;
    let mut w = Tensor::zeros(t_len, k);
    let mut total = 0.0;
    for (t, &y) in labels.iter().enumerate() {
        if y != UNLABELED {
            w.set(t, y as usize, class_weights[y as usize]);
            total += class_weights[y as usize];
        }
    }
    let weighted = g.mul_const(log_probs, w);
    Ok((g.sum(weighted), total))
}

/// Pieces of an evidence lower bound, each a `[1 × 1]` node.
#[derive(Debug, Clone, Copy)]
pub struct ElboTerms {
    pub reconstruction: Var,
    pub z_kl: Var,
    pub y_kl: Var,
}

impl ElboTerms {
    /// `reconstruction − β·(z_kl + y_kl)`.
    pub fn combine(&self, g: &mut Graph, kl_anneal: f64) -> Var {
        let kl = g.add(self.z_kl, self.y_kl);
        let kl = g.scale(kl, -kl_anneal);
        g.add(self.reconstruction, kl)
    }
}

/// Semi-supervised objective: `combine(terms, β) + α·label_log_lik`.
#[derive(Debug, Clone, Copy)]
pub struct SemiSupervised {
    pub elbo: Var,
    pub terms: ElboTerms,
    /// Weighted labeled log-likelihood of the classifier (before `α`).
    pub label_log_lik: Var,
    pub label_weight: f64,
}

fn check_posterior(g: &Graph, post: &PosteriorOutputs, noise: &ReparamNoise, x: Var, k: usize, l: usize) -> Result<()> {
    let t_len = g.shape(x).0;
    if t_len == 0 {
        return Err(Error::OutOfRange {
            what: "sequence length",
            detail: "T must be at least 1".into(),
        });
    }
    if post.means.len() != k || post.logvars.len() != k || noise.n_classes() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: post.means.len().min(post.logvars.len()).min(noise.n_classes()),
        });
    }
    for c in 0..k {
        for v in [post.means[c], post.logvars[c]] {
            if g.shape(v) != (t_len, l) {
                return Err(Error::Shape {
                    expected: (t_len, l),
                    found: g.shape(v),
                });
            }
        }
        if noise.class(c).shape() != (t_len, l) {
            return Err(Error::Shape {
                expected: (t_len, l),
                found: noise.class(c).shape(),
            });
        }
    }
    Ok(())
}

fn samples(g: &mut Graph, post: &PosteriorOutputs, noise: &ReparamNoise) -> Vec<Var> {
    (0..post.means.len())
        .map(|k| reparam_graph(g, post.means[k], post.logvars[k], noise.class(k)))
        .collect()
}

fn onehot_columns(g: &mut Graph, labels: &[usize], k: usize) -> Vec<Var> {
    (0..k)
        .map(|c| {
            let col: Vec<f64> = labels.iter().map(|&y| if y == c { 1.0 } else { 0.0 }).collect();
            g.constant(Tensor::column_vector(&col))
        })
        .collect()
}

/// `Σ_k mul_col(v_k, oh_k)`: selects row `t` of `v_{y_t}`.
fn gather(g: &mut Graph, vs: &[Var], oh: &[Var]) -> Var {
    let parts: Vec<Var> = vs.iter().zip(oh).map(|(&v, &o)| g.mul_col(v, o)).collect();
    g.add_all(&parts)
}

fn dense_labels(labels: &[i32], k: usize) -> Result<Vec<usize>> {
    labels
        .iter()
        .enumerate()
        .map(|(t, &y)| {
            if y >= 0 && (y as usize) < k {
                Ok(y as usize)
            } else if y == UNLABELED {
                Err(Error::InvalidConfig(format!("frame {t} is unlabeled in a labeled bound")))
            } else {
                Err(Error::LabelOutOfRange {
                    label: y as i64,
                    frame: t,
                    n_classes: k,
                })
            }
        })
        .collect()
}

/// Switching-system bound with every state observed, evaluated by selecting
/// each frame's labeled branch.
pub fn slds_labeled_terms(
    g: &mut Graph,
    gen: &SldsParams,
    gp: &Bound,
    x: Var,
    labels: &[i32],
    post: &PosteriorOutputs,
    noise: &ReparamNoise,
) -> Result<ElboTerms> {
    let (k, l) = (gen.n_states(), gen.latent_dim());
    check_posterior(g, post, noise, x, k, l)?;
    let t_len = g.shape(x).0;
    if labels.len() != t_len {
        return Err(Error::RowCountMismatch {
            features: t_len,
            labels: labels.len(),
        });
    }
    let y = dense_labels(labels, k)?;
    let z_all = samples(g, post, noise);
    let oh = onehot_columns(g, &y, k);
    let z = gather(g, &z_all, &oh);
    let q_mean = gather(g, &post.means, &oh);
    let q_logvar = gather(g, &post.logvars, &oh);

    let emis = gen.emission_log_rows(g, gp, x, z);
    let reconstruction = g.sum(emis);

    let m1 = g.slice_rows(q_mean, 0, 1);
    let v1 = g.slice_rows(q_logvar, 0, 1);
    let kl1 = gaussian_kl_rows(g, m1, v1, None, None);
    let log_pi = gen.initial_log_probs_graph(g, gp);
    let log_pi_y1 = g.column(log_pi, y[0]);
    let mut z_parts = vec![kl1];
    let mut y_parts = vec![g.neg(log_pi_y1)];
    if t_len > 1 {
        let z_prev = g.slice_rows(z, 0, t_len - 1);
        let q_m = g.slice_rows(q_mean, 1, t_len);
        let q_v = g.slice_rows(q_logvar, 1, t_len);
        for c in 0..k {
            let pm = gen.dynamics_mean_graph(g, gp, c, z_prev);
            let plv = gen.dynamics_logvar_var(gp, c);
            let kl = gaussian_kl_rows(g, q_m, q_v, Some(pm), Some(plv));
            let mask = g.slice_rows(oh[c], 1, t_len);
            let masked = g.mul(kl, mask);
            z_parts.push(g.sum(masked));

            let lp = gen.transition_log_probs_graph(g, gp, c, z_prev);
            let mut sel = Tensor::zeros(t_len - 1, k);
            for t in 0..t_len - 1 {
                if y[t] == c {
                    sel.set(t, y[t + 1], 1.0);
                }
            }
            let picked = g.mul_const(lp, sel);
            let s = g.sum(picked);
            y_parts.push(g.neg(s));
        }
    }
    Ok(ElboTerms {
        reconstruction,
        z_kl: g.add_all(&z_parts),
        y_kl: g.add_all(&y_parts),
    })
}

/// Marginal switching-system bound under the per-frame class distribution `r`.
pub fn slds_marginal_terms(
    g: &mut Graph,
    gen: &SldsParams,
    gp: &Bound,
    x: Var,
    r: Var,
    post: &PosteriorOutputs,
    noise: &ReparamNoise,
) -> Result<ElboTerms> {
    let (k, l) = (gen.n_states(), gen.latent_dim());
    check_posterior(g, post, noise, x, k, l)?;
    let t_len = g.shape(x).0;
    if g.shape(r) != (t_len, k) {
        return Err(Error::Shape {
            expected: (t_len, k),
            found: g.shape(r),
        });
    }
    let z_all = samples(g, post, noise);
    let r_cols: Vec<Var> = (0..k).map(|c| g.column(r, c)).collect();

    // Σ_t Σ_k r_tk log p(x_t | z̃_t^k)
    let mut rec_parts = Vec::with_capacity(k);
    for c in 0..k {
        let emis = gen.emission_log_rows(g, gp, x, z_all[c]);
        let w = g.mul(emis, r_cols[c]);
        rec_parts.push(g.sum(w));
    }
    let reconstruction = g.add_all(&rec_parts);

    // Σ_k r_1k KL[q(z_1 | k) ‖ N(0, I)] and KL[r_1 ‖ π]
    let mut z_parts = Vec::new();
    for c in 0..k {
        let m1 = g.slice_rows(post.means[c], 0, 1);
        let v1 = g.slice_rows(post.logvars[c], 0, 1);
        let kl = gaussian_kl_rows(g, m1, v1, None, None);
        let w = g.slice_rows(r_cols[c], 0, 1);
        z_parts.push(g.mul(kl, w));
    }
    let r1 = g.slice_rows(r, 0, 1);
    let log_pi = gen.initial_log_probs_graph(g, gp);
    let neg_ent = g.xlogx(r1);
    let neg_ent = g.sum(neg_ent);
    let cross = g.mul(r1, log_pi);
    let cross = g.sum(cross);
    let mut y_parts = vec![g.sub(neg_ent, cross)];

    if t_len > 1 {
        let r_next: Vec<Var> = r_cols.iter().map(|&c| g.slice_rows(c, 1, t_len)).collect();
        let r_prev: Vec<Var> = r_cols.iter().map(|&c| g.slice_rows(c, 0, t_len - 1)).collect();
        let z_prev: Vec<Var> = z_all.iter().map(|&z| g.slice_rows(z, 0, t_len - 1)).collect();

        // Σ_t Σ_k Σ_k' r_tk r_{t−1,k'} KL[q(z_t | k) ‖ p(z_t | z̃_{t−1}^{k'}, k)]
        for c in 0..k {
            let q_m = g.slice_rows(post.means[c], 1, t_len);
            let q_v = g.slice_rows(post.logvars[c], 1, t_len);
            let plv = gen.dynamics_logvar_var(gp, c);
            for cp in 0..k {
                let pm = gen.dynamics_mean_graph(g, gp, c, z_prev[cp]);
                let kl = gaussian_kl_rows(g, q_m, q_v, Some(pm), Some(plv));
                let w = g.mul(r_next[c], r_prev[cp]);
                let wk = g.mul(kl, w);
                z_parts.push(g.sum(wk));
            }
        }

        // Σ_t Σ_k r_{t−1,k} KL[r_t ‖ p(y_t | k, z̃_{t−1}^k)]
        let rn = g.slice_rows(r, 1, t_len);
        let ent = g.xlogx(rn);
        let ent = g.row_sum(ent);
        for c in 0..k {
            let lp = gen.transition_log_probs_graph(g, gp, c, z_prev[c]);
            let cross = g.mul(rn, lp);
            let cross = g.row_sum(cross);
            let kl = g.sub(ent, cross);
            let w = g.mul(kl, r_prev[c]);
            y_parts.push(g.sum(w));
        }
    }
    Ok(ElboTerms {
        reconstruction,
        z_kl: g.add_all(&z_parts),
        y_kl: g.add_all(&y_parts),
    })
}

/// Switching-system bound with all labels observed.
pub fn elbo_labeled(
    g: &mut Graph,
    gen: &SldsParams,
    gp: &Bound,
    x: Var,
    labels: &[i32],
    post: &PosteriorOutputs,
    noise: &ReparamNoise,
) -> Result<Var> {
    let terms = slds_labeled_terms(g, gen, gp, x, labels, post, noise)?;
    Ok(terms.combine(g, 1.0))
}

/// Switching-system bound with all labels unobserved, marginalized under the
/// classifier.
pub fn elbo_unlabeled(
    g: &mut Graph,
    gen: &SldsParams,
    gp: &Bound,
    x: Var,
    post: &PosteriorOutputs,
    noise: &ReparamNoise,
) -> Result<Var> {
    let terms = slds_marginal_terms(g, gen, gp, x, post.probs, post, noise)?;
    Ok(terms.combine(g, 1.0))
}

/// Semi-supervised switching-system objective with annealing and the
/// weighted classifier term.
pub fn elbo_semisupervised(
    g: &mut Graph,
    gen: &SldsParams,
    gp: &Bound,
    x: Var,
    labels: &[i32],
    post: &PosteriorOutputs,
    noise: &ReparamNoise,
    weights: &LossWeights,
) -> Result<SemiSupervised> {
    weights.validate(gen.n_states())?;
    let r = r_graph(g, post.probs, labels)?;
    let terms = slds_marginal_terms(g, gen, gp, x, r, post, noise)?;
    finish_semisupervised(g, terms, post, labels, weights)
}

fn finish_semisupervised(
    g: &mut Graph,
    terms: ElboTerms,
    post: &PosteriorOutputs,
    labels: &[i32],
    weights: &LossWeights,
) -> Result<SemiSupervised> {
    let bound = terms.combine(g, weights.kl_anneal);
    let (label_log_lik, label_weight) =
        weighted_label_log_lik(g, post.log_probs, labels, &weights.class_weights)?;
    let cls = g.scale(label_log_lik, weights.alpha);
    Ok(SemiSupervised {
        elbo: g.add(bound, cls),
        terms,
        label_log_lik,
        label_weight,
    })
}

/// Static mixture bound with every frame labeled.
pub fn gmdgm_labeled_terms(
    g: &mut Graph,
    gen: &GmdgmParams,
    gp: &Bound,
    x: Var,
    labels: &[i32],
    post: &PosteriorOutputs,
    noise: &ReparamNoise,
) -> Result<ElboTerms> {
    let (k, l) = (gen.n_classes(), gen.latent_dim());
    check_posterior(g, post, noise, x, k, l)?;
    let t_len = g.shape(x).0;
    if labels.len() != t_len {
        return Err(Error::RowCountMismatch {
            features: t_len,
            labels: labels.len(),
        });
    }
    let y = dense_labels(labels, k)?;
    let z_all = samples(g, post, noise);
    let oh = onehot_columns(g, &y, k);
    let z = gather(g, &z_all, &oh);
    let emis = gen.emission_log_rows(g, gp, x, z);
    let reconstruction = g.sum(emis);
    let mut z_parts = Vec::with_capacity(k);
    for c in 0..k {
        let kl = gen.prior_kl_rows(g, gp, c, post.means[c], post.logvars[c]);
        let m = g.mul(kl, oh[c]);
        z_parts.push(g.sum(m));
    }
    let log_pi = gen.class_log_probs_graph(g, gp);
    let mut sel = Tensor::zeros(t_len, k);
    for (t, &c) in y.iter().enumerate() {
        sel.set(t, c, 1.0);
    }
    let sel = g.constant(sel);
    let picked = g.mul_row(sel, log_pi);
    let lp = g.sum(picked);
    Ok(ElboTerms {
        reconstruction,
        z_kl: g.add_all(&z_parts),
        y_kl: g.neg(lp),
    })
}

/// Static mixture bound marginalized under `r`:
/// `Σ_t [Σ_k r_tk L_l(x_t, k) − Σ_k r_tk log r_tk]`.
pub fn gmdgm_marginal_terms(
    g: &mut Graph,
    gen: &GmdgmParams,
    gp: &Bound,
    x: Var,
    r: Var,
    post: &PosteriorOutputs,
    noise: &ReparamNoise,
) -> Result<ElboTerms> {
    let (k, l) = (gen.n_classes(), gen.latent_dim());
    check_posterior(g, post, noise, x, k, l)?;
    let t_len = g.shape(x).0;
    if g.shape(r) != (t_len, k) {
        return Err(Error::Shape {
            expected: (t_len, k),
            found: g.shape(r),
        });
    }
    let z_all = samples(g, post, noise);
    let mut rec_parts = Vec::with_capacity(k);
    let mut z_parts = Vec::with_capacity(k);
    for c in 0..k {
        let rc = g.column(r, c);
        let emis = gen.emission_log_rows(g, gp, x, z_all[c]);
        let w = g.mul(emis, rc);
        rec_parts.push(g.sum(w));
        let kl = gen.prior_kl_rows(g, gp, c, post.means[c], post.logvars[c]);
        let w = g.mul(kl, rc);
        z_parts.push(g.sum(w));
    }
    let log_pi = gen.class_log_probs_graph(g, gp);
    let neg_ent = g.xlogx(r);
    let neg_ent = g.sum(neg_ent);
    let cross = g.mul_row(r, log_pi);
    let cross = g.sum(cross);
    Ok(ElboTerms {
        reconstruction: g.add_all(&rec_parts),
        z_kl: g.add_all(&z_parts),
        y_kl: g.sub(neg_ent, cross),
    })
}

pub fn gmdgm_elbo_labeled(
    g: &mut Graph,
    gen: &GmdgmParams,
    gp: &Bound,
    x: Var,
    labels: &[i32],
    post: &PosteriorOutputs,
    noise: &ReparamNoise,
) -> Result<Var> {
    let terms = gmdgm_labeled_terms(g, gen, gp, x, labels, post, noise)?;
    Ok(terms.combine(g, 1.0))
}

pub fn gmdgm_elbo_unlabeled(
    g: &mut Graph,
    gen: &GmdgmParams,
    gp: &Bound,
    x: Var,
    post: &PosteriorOutputs,
    noise: &ReparamNoise,
) -> Result<Var> {
    let terms = gmdgm_marginal_terms(g, gen, gp, x, post.probs, post, noise)?;
    Ok(terms.combine(g, 1.0))
}

pub fn gmdgm_elbo_semisupervised(
    g: &mut Graph,
    gen: &GmdgmParams,
    gp: &Bound,
    x: Var,
    labels: &[i32],
    post: &PosteriorOutputs,
    noise: &ReparamNoise,
    weights: &LossWeights,
) -> Result<SemiSupervised> {
    weights.validate(gen.n_classes())?;
    let r = r_graph(g, post.probs, labels)?;
    let terms = gmdgm_marginal_terms(g, gen, gp, x, r, post, noise)?;
    finish_semisupervised(g, terms, post, labels, weights)
}
