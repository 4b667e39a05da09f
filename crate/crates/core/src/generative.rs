//! Generative models: the recurrent switching (non)linear dynamical system
//! and the static Gaussian-mixture deep generative model.
//!
//! Both share a one-hidden-layer decoder `g: L → L → D` and a diagonal,
//! state-independent emission covariance. All variances are stored as
//! unconstrained log-variances.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::math::{self, LN_2PI};
use crate::nn::{Linear, Mlp, StateMap};
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynamicsKind {
    Linear,
    Nonlinear,
}

/// Log-density of `x` under `N(mean, diag(var))`.
pub fn diag_gaussian_logpdf(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(var)
        .map(|((&x, &m), &v)| -0.5 * (LN_2PI + math::ln(v) + (x - m) * (x - m) / v))
        .sum()
}

/// `KL(N(mq, diag(vq)) ‖ N(mp, diag(vp)))`.
pub fn diag_gaussian_kl(mq: &[f64], vq: &[f64], mp: &[f64], vp: &[f64]) -> f64 {
    let mut kl = 0.0;
    for i in 0..mq.len() {
        let d = mq[i] - mp[i];
        kl += math::ln(vp[i] / vq[i]) + (vq[i] + d * d) / vp[i] - 1.0;
    }
    0.5 * kl
}

/// `KL(q ‖ p)` for categorical distributions, with `0 ln 0 = 0`.
pub fn categorical_kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .map(|(&a, &b)| if a > 0.0 { a * (math::ln(a) - math::ln(b)) } else { 0.0 })
        .sum()
}

/// Row-wise diagonal-Gaussian KL on the graph, returned as `[n × 1]`.
///
/// `q_logvar`/`p_logvar` are log-variances. The prior mean and log-variance
/// may be full `[n × L]` nodes, broadcast `[1 × L]` rows, or absent (zero
/// mean, unit variance).
pub fn gaussian_kl_rows(
    g: &mut Graph,
    q_mean: Var,
    q_logvar: Var,
    p_mean: Option<Var>,
    p_logvar: Option<Var>,
) -> Var {
    let (n, _) = g.shape(q_mean);
    let diff = match p_mean {
        None => q_mean,
        Some(m) if g.shape(m).0 == n => g.sub(q_mean, m),
        Some(m) => {
            let neg = g.neg(m);
            g.add_row(q_mean, neg)
        }
    };
    let sq = g.square(diff);
    let vq = g.exp(q_logvar);
    let num = g.add(vq, sq);
    let neg_lq = g.neg(q_logvar);
    let (ratio, logs) = match p_logvar {
        None => (num, neg_lq),
        Some(lp) if g.shape(lp).0 == n => {
            let neg_lp = g.neg(lp);
            let inv = g.exp(neg_lp);
            (g.mul(num, inv), g.add(neg_lq, lp))
        }
        Some(lp) => {
            let neg_lp = g.neg(lp);
            let inv = g.exp(neg_lp);
            (g.mul_row(num, inv), g.add_row(neg_lq, lp))
        }
    };
    let t = g.add(ratio, logs);
    let t = g.add_scalar(t, -1.0);
    let s = g.row_sum(t);
    g.scale(s, 0.5)
}

/// Row-wise `log N(x_t | g(z_t), diag(S))` on the graph, as `[T × 1]`.
fn emission_rows(
    g: &mut Graph,
    p: &Bound,
    decoder: &Mlp,
    emission_logvar: ParamId,
    x: Var,
    z: Var,
) -> Var {
    let mean = decoder.forward(g, p, z);
    let resid = g.sub(x, mean);
    let sq = g.square(resid);
    let ls = p.var(emission_logvar);
    let neg_ls = g.neg(ls);
    let inv = g.exp(neg_ls);
    let scaled = g.mul_row(sq, inv);
    let with_log = g.add_row(scaled, ls);
    let rows = g.row_sum(with_log);
    let d = g.shape(x).1 as f64;
    let rows = g.add_scalar(rows, d * LN_2PI);
    g.scale(rows, -0.5)
}

/// One sampled trajectory `(y, z, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    pub y: Vec<usize>,
    pub z: Tensor,
    pub x: Tensor,
}

/// Parameters of the recurrent switching dynamical system.
///
/// * `p(y_1) = Cat(π)`, `p(z_1) = N(0, I)`
/// * `p(y_t | y_{t−1}, z_{t−1}) = Cat(softmax(R_{y_{t−1}} z_{t−1} + r_{y_{t−1}}))`
/// * `p(z_t | z_{t−1}, y_t) = N(A_{y_t} z_{t−1} + b_{y_t}, diag(Q_{y_t}))`
/// * `p(x_t | z_t) = N(g(z_t), diag(S))`
///
/// The nonlinear variant replaces both affine maps with per-state
/// one-hidden-layer networks of width `L`.
#[derive(Debug, Clone)]
pub struct SldsParams {
    n_states: usize,
    latent_dim: usize,
    obs_dim: usize,
    kind: DynamicsKind,
    pub store: ParamStore,
    dynamics: Vec<StateMap>,
    dynamics_logvar: Vec<ParamId>,
    transitions: Vec<StateMap>,
    decoder: Mlp,
    emission_logvar: ParamId,
    initial_logits: ParamId,
}

impl SldsParams {
    /// Randomly initialised parameters: near-identity dynamics, unit noise,
    /// uniform initial-state prior.
    pub fn new(
        n_states: usize,
        latent_dim: usize,
        obs_dim: usize,
        kind: DynamicsKind,
        seed: u64,
    ) -> Result<Self> {
        if n_states == 0 || latent_dim == 0 || obs_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "slds dimensions must be positive: K={n_states}, L={latent_dim}, D={obs_dim}"
            )));
        }
        let mut rng = rng::seeded(seed);
        let mut store = ParamStore::new();
        let (k, l, d) = (n_states, latent_dim, obs_dim);
        let mut dynamics = Vec::with_capacity(k);
        let mut dynamics_logvar = Vec::with_capacity(k);
        for s in 0..k {
            let name = format!("slds.dynamics.{s}");
            let map = match kind {
                DynamicsKind::Linear => {
                    let lin = Linear::new(&mut store, &name, l, l, &mut rng);
                    let mut a = rng::uniform_tensor(l, l, 0.05, &mut rng);
                    for i in 0..l {
                        a.set(i, i, a.get(i, i) + 1.0);
                    }
                    let b = rng::uniform_tensor(1, l, 0.05, &mut rng);
                    lin.set_affine(&mut store, &a, b.data());
                    StateMap::Linear(lin)
                }
                DynamicsKind::Nonlinear => {
                    StateMap::Nonlinear(Mlp::new(&mut store, &name, l, l, l, &mut rng))
                }
            };
            dynamics.push(map);
            dynamics_logvar.push(store.add(format!("slds.dynamics.{s}.logvar"), Tensor::zeros(1, l)));
        }
        let mut transitions = Vec::with_capacity(k);
        for s in 0..k {
            let name = format!("slds.transition.{s}");
            let map = match kind {
                DynamicsKind::Linear => {
                    let lin = Linear::new(&mut store, &name, l, k, &mut rng);
                    *store.get_mut(lin.weight) = rng::uniform_tensor(l, k, 0.05, &mut rng);
                    *store.get_mut(lin.bias) = Tensor::zeros(1, k);
                    StateMap::Linear(lin)
                }
                DynamicsKind::Nonlinear => {
                    StateMap::Nonlinear(Mlp::new(&mut store, &name, l, l, k, &mut rng))
                }
            };
            transitions.push(map);
        }
        let decoder = Mlp::new(&mut store, "slds.decoder", l, l, d, &mut rng);
        let emission_logvar = store.add("slds.emission.logvar", Tensor::zeros(1, d));
        let initial_logits = store.add("slds.initial.logits", Tensor::zeros(1, k));
        Ok(Self {
            n_states,
            latent_dim,
            obs_dim,
            kind,
            store,
            dynamics,
            dynamics_logvar,
            transitions,
            decoder,
            emission_logvar,
            initial_logits,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn kind(&self) -> DynamicsKind {
        self.kind
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    fn check_state(&self, k: usize) -> Result<()> {
        if k >= self.n_states {
            return Err(Error::OutOfRange {
                what: "state index",
                detail: format!("{k} ≥ K={}", self.n_states),
            });
        }
        Ok(())
    }

    /// `A_k` (row-major `[L × L]`) and `b_k` of a linear-variant state.
    pub fn linear_dynamics(&self, k: usize) -> Result<(Tensor, Vec<f64>)> {
        self.check_state(k)?;
        match &self.dynamics[k] {
            StateMap::Linear(lin) => Ok((
                self.store.get(lin.weight).transpose(),
                self.store.get(lin.bias).data().to_vec(),
            )),
            StateMap::Nonlinear(_) => Err(Error::Unsupported("affine dynamics (nonlinear variant)")),
        }
    }

    pub fn set_linear_dynamics(&mut self, k: usize, a: &Tensor, b: &[f64]) -> Result<()> {
        self.check_state(k)?;
        match &self.dynamics[k] {
            StateMap::Linear(lin) => {
                lin.set_affine(&mut self.store, a, b);
                Ok(())
            }
            StateMap::Nonlinear(_) => Err(Error::Unsupported("affine dynamics (nonlinear variant)")),
        }
    }

    pub fn set_linear_transition(&mut self, k_prev: usize, r_mat: &Tensor, r_bias: &[f64]) -> Result<()> {
        self.check_state(k_prev)?;
        match &self.transitions[k_prev] {
            StateMap::Linear(lin) => {
                lin.set_affine(&mut self.store, r_mat, r_bias);
                Ok(())
            }
            StateMap::Nonlinear(_) => Err(Error::Unsupported("affine transitions (nonlinear variant)")),
        }
    }

    pub fn dynamics_variance(&self, k: usize) -> Vec<f64> {
        self.store
            .get(self.dynamics_logvar[k])
            .data()
            .iter()
            .map(|&v| math::exp(v))
            .collect()
    }

    pub fn set_dynamics_variance(&mut self, k: usize, var: &[f64]) -> Result<()> {
        self.check_state(k)?;
        *self.store.get_mut(self.dynamics_logvar[k]) = log_variance_row(var)?;
        Ok(())
    }

    pub fn emission_variance(&self) -> Vec<f64> {
        self.store
            .get(self.emission_logvar)
            .data()
            .iter()
            .map(|&v| math::exp(v))
            .collect()
    }

    pub fn set_emission_variance(&mut self, var: &[f64]) -> Result<()> {
        *self.store.get_mut(self.emission_logvar) = log_variance_row(var)?;
        Ok(())
    }

    pub fn initial_probs(&self) -> Vec<f64> {
        math::softmax(self.store.get(self.initial_logits).data())
    }

    pub fn set_initial_probs(&mut self, probs: &[f64]) -> Result<()> {
        if probs.len() != self.n_states || probs.iter().any(|&p| p <= 0.0) {
            return Err(Error::InvalidConfig("initial probabilities must be positive, one per state".into()));
        }
        let logits: Vec<f64> = probs.iter().map(|&p| math::ln(p)).collect();
        *self.store.get_mut(self.initial_logits) = Tensor::row_vector(&logits);
        Ok(())
    }

    /// Next-state distribution `softmax(R_{y_prev} z_prev + r_{y_prev})`.
    pub fn transition_probs(&self, y_prev: usize, z_prev: &[f64]) -> Vec<f64> {
        math::softmax(&self.transitions[y_prev].apply(&self.store, z_prev))
    }

    /// Mean of `p(z_t | z_{t−1}, y_t = k)`.
    pub fn dynamics_mean(&self, k: usize, z_prev: &[f64]) -> Vec<f64> {
        self.dynamics[k].apply(&self.store, z_prev)
    }

    pub fn dynamics_logpdf(&self, z_t: &[f64], z_prev: &[f64], k: usize) -> f64 {
        diag_gaussian_logpdf(z_t, &self.dynamics_mean(k, z_prev), &self.dynamics_variance(k))
    }

    /// `KL(N(q_mean, diag(q_var)) ‖ p(z_t | z_prev, y_t = k))`.
    pub fn dynamics_kl(&self, q_mean: &[f64], q_var: &[f64], z_prev: &[f64], k: usize) -> Result<f64> {
        if q_var.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::OutOfRange {
                what: "variance",
                detail: "posterior variances must be positive".into(),
            });
        }
        Ok(diag_gaussian_kl(
            q_mean,
            q_var,
            &self.dynamics_mean(k, z_prev),
            &self.dynamics_variance(k),
        ))
    }

    /// Decoder output `g(z)`.
    pub fn emission_mean(&self, z: &[f64]) -> Vec<f64> {
        self.decoder.apply(&self.store, z)
    }

    pub fn emission_logpdf(&self, x: &[f64], z: &[f64]) -> f64 {
        diag_gaussian_logpdf(x, &self.emission_mean(z), &self.emission_variance())
    }

    /// Ancestral sampling in the order `y_1, z_1, x_1, y_2, z_2, x_2, …`.
    pub fn sample_sequence(&self, t_len: usize, seed: u64) -> Result<LatentTrajectory> {
        if t_len == 0 {
            return Err(Error::OutOfRange {
                what: "sequence length",
                detail: "T must be at least 1".into(),
            });
        }
        let mut rng = rng::seeded(seed);
        let (l, d) = (self.latent_dim, self.obs_dim);
        let q_sd: Vec<Vec<f64>> = (0..self.n_states)
            .map(|k| self.dynamics_variance(k).into_iter().map(math::sqrt).collect())
            .collect();
        let s_sd: Vec<f64> = self.emission_variance().into_iter().map(math::sqrt).collect();
        let mut y = Vec::with_capacity(t_len);
        let mut z = Tensor::zeros(t_len, l);
        let mut x = Tensor::zeros(t_len, d);
        let mut z_prev: Vec<f64> = Vec::new();
        for t in 0..t_len {
            let (yt, zt) = if t == 0 {
                let yt = rng::categorical(&self.initial_probs(), &mut rng);
                let zt: Vec<f64> = (0..l).map(|_| rng::standard_normal(&mut rng)).collect();
                (yt, zt)
            } else {
                let probs = self.transition_probs(y[t - 1], &z_prev);
                let yt = rng::categorical(&probs, &mut rng);
                let mean = self.dynamics_mean(yt, &z_prev);
                let zt = mean
                    .iter()
                    .zip(&q_sd[yt])
                    .map(|(m, s)| m + s * rng::standard_normal(&mut rng))
                    .collect();
                (yt, zt)
            };
            let xm = self.emission_mean(&zt);
            for j in 0..d {
                x.set(t, j, xm[j] + s_sd[j] * rng::standard_normal(&mut rng));
            }
            z.row_mut(t).copy_from_slice(&zt);
            y.push(yt);
            z_prev = zt;
        }
        Ok(LatentTrajectory { y, z, x })
    }

    /// Nonlinear-variant copy whose networks reproduce this linear model
    /// exactly while every hidden pre-activation stays above zero, i.e. for
    /// `z` with all coordinates greater than `−offset`.
    pub fn to_nonlinear(&self, offset: f64) -> Result<SldsParams> {
        if self.kind != DynamicsKind::Linear {
            return Err(Error::Unsupported("linear maps to convert"));
        }
        let (k, l) = (self.n_states, self.latent_dim);
        let mut out = SldsParams::new(k, l, self.obs_dim, DynamicsKind::Nonlinear, 0)?;
        let eye = identity(l);
        let shift = vec![offset; l];
        for s in 0..k {
            for (src, dst) in [(&self.dynamics[s], &out.dynamics[s]), (&self.transitions[s], &out.transitions[s])] {
                let (StateMap::Linear(lin), StateMap::Nonlinear(mlp)) = (src, dst) else {
                    unreachable!("variants checked above");
                };
                let a = self.store.get(lin.weight).transpose();
                let b = self.store.get(lin.bias).data();
                let a_shift = a.matmul(&Tensor::column_vector(&shift));
                let bias: Vec<f64> = b.iter().zip(a_shift.data()).map(|(b, s)| b - s).collect();
                mlp.hidden.set_affine(&mut out.store, &eye, &shift);
                mlp.output.set_affine(&mut out.store, &a, &bias);
            }
            *out.store.get_mut(out.dynamics_logvar[s]) = self.store.get(self.dynamics_logvar[s]).clone();
        }
        for (name, t) in self.store.iter() {
            if name.starts_with("slds.decoder") || name.starts_with("slds.emission") || name.starts_with("slds.initial") {
                out.store.assign(name, t.clone())?;
            }
        }
        Ok(out)
    }

    // Graph-side pieces used by the variational objectives.

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        self.store.bind(g, trainable)
    }

    /// `log p(x_t | z_t)` for every row, `[T × 1]`.
    pub fn emission_log_rows(&self, g: &mut Graph, p: &Bound, x: Var, z: Var) -> Var {
        emission_rows(g, p, &self.decoder, self.emission_logvar, x, z)
    }

    /// Dynamics means for state `k` applied to every row of `z_prev`.
    pub fn dynamics_mean_graph(&self, g: &mut Graph, p: &Bound, k: usize, z_prev: Var) -> Var {
        self.dynamics[k].forward(g, p, z_prev)
    }

    pub fn dynamics_logvar_var(&self, p: &Bound, k: usize) -> Var {
        p.var(self.dynamics_logvar[k])
    }

    /// `log p(y_t = · | y_{t−1} = k_prev, z_{t−1})` for every row, `[n × K]`.
    pub fn transition_log_probs_graph(&self, g: &mut Graph, p: &Bound, k_prev: usize, z_prev: Var) -> Var {
        let logits = self.transitions[k_prev].forward(g, p, z_prev);
        g.log_softmax(logits)
    }

    /// `log π` as `[1 × K]`.
    pub fn initial_log_probs_graph(&self, g: &mut Graph, p: &Bound) -> Var {
        g.log_softmax(p.var(self.initial_logits))
    }
}

/// Builder for simulation parameter sets with controllable state separation.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSlds {
    pub n_states: usize,
    pub latent_dim: usize,
    pub obs_dim: usize,
    /// Probability of staying in the current state at every step.
    pub self_transition: f64,
    /// Radius of the circle carrying the per-state fixed points; zero makes
    /// every state share the same stationary mean.
    pub fixed_point_radius: f64,
    /// Base rotation angle per step in the first latent plane.
    pub rotation: f64,
    /// Contraction factor of the dynamics.
    pub contraction: f64,
    pub dynamics_noise_var: f64,
    pub emission_noise_var: f64,
}

impl Default for SyntheticSlds {
    fn default() -> Self {
        Self {
            n_states: 3,
            latent_dim: 2,
            obs_dim: 4,
            self_transition: 0.98,
            fixed_point_radius: 3.0,
            rotation: 0.15,
            contraction: 0.9,
            dynamics_noise_var: 0.01,
            emission_noise_var: 0.01,
        }
    }
}

impl SyntheticSlds {
    /// Linear-variant parameters. State `k` rotates the first latent plane
    /// by `rotation·(k+1)`, alternating direction, and contracts towards a
    /// fixed point at angle `2πk/K` on a circle of `fixed_point_radius`.
    pub fn build(&self, seed: u64) -> Result<SldsParams> {
        let (k, l, d) = (self.n_states, self.latent_dim, self.obs_dim);
        if !(self.self_transition > 0.0 && self.self_transition < 1.0) && k > 1 {
            return Err(Error::InvalidConfig("self_transition must lie in (0, 1)".into()));
        }
        let mut p = SldsParams::new(k, l, d, DynamicsKind::Linear, seed)?;
        let self_logit = if k > 1 {
            math::ln(self.self_transition * (k - 1) as f64 / (1.0 - self.self_transition))
        } else {
            0.0
        };
        for s in 0..k {
            let mut a = identity(l);
            for i in 0..l {
                a.set(i, i, self.contraction);
            }
            if l >= 2 {
                let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
                let theta = sign * self.rotation * (s + 1) as f64;
                let (c, sn) = (math::cos(theta), math::sin(theta));
                a.set(0, 0, self.contraction * c);
                a.set(0, 1, -self.contraction * sn);
                a.set(1, 0, self.contraction * sn);
                a.set(1, 1, self.contraction * c);
            }
            let mut centre = vec![0.0; l];
            let angle = 2.0 * core::f64::consts::PI * s as f64 / k as f64;
            centre[0] = self.fixed_point_radius * math::cos(angle);
            if l >= 2 {
                centre[1] = self.fixed_point_radius * math::sin(angle);
            }
            // b = (I − A)·c keeps c as the fixed point
            let ac = a.matmul(&Tensor::column_vector(&centre));
            let b: Vec<f64> = centre.iter().zip(ac.data()).map(|(c, a)| c - a).collect();
            p.set_linear_dynamics(s, &a, &b)?;
            p.set_dynamics_variance(s, &vec![self.dynamics_noise_var; l])?;
            let mut r = vec![0.0; k];
            r[s] = self_logit;
            p.set_linear_transition(s, &Tensor::zeros(k, l), &r)?;
        }
        p.set_emission_variance(&vec![self.emission_noise_var; d])?;
        p.set_initial_probs(&vec![1.0 / k as f64; k])?;
        Ok(p)
    }
}

/// Parameters of the static Gaussian-mixture deep generative model:
/// `p(y) = Cat(π)`, `p(z | y) = N(f_y, diag(s_y))`, `p(x | z) = N(g(z), diag(S_g))`.
#[derive(Debug, Clone)]
pub struct GmdgmParams {
    n_classes: usize,
    latent_dim: usize,
    obs_dim: usize,
    pub store: ParamStore,
    prior_mean: ParamId,
    prior_logvar: ParamId,
    decoder: Mlp,
    emission_logvar: ParamId,
    class_logits: ParamId,
}

impl GmdgmParams {
    pub fn new(n_classes: usize, latent_dim: usize, obs_dim: usize, seed: u64) -> Result<Self> {
        if n_classes == 0 || latent_dim == 0 || obs_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "gmdgm dimensions must be positive: K={n_classes}, L={latent_dim}, D={obs_dim}"
            )));
        }
        let mut rng = rng::seeded(seed);
        let mut store = ParamStore::new();
        let prior_mean = store.add(
            "gmdgm.prior.mean",
            rng::normal_tensor(n_classes, latent_dim, &mut rng),
        );
        let prior_logvar = store.add("gmdgm.prior.logvar", Tensor::zeros(n_classes, latent_dim));
        let decoder = Mlp::new(&mut store, "gmdgm.decoder", latent_dim, latent_dim, obs_dim, &mut rng);
        let emission_logvar = store.add("gmdgm.emission.logvar", Tensor::zeros(1, obs_dim));
        let class_logits = store.add("gmdgm.class.logits", Tensor::zeros(1, n_classes));
        Ok(Self {
            n_classes,
            latent_dim,
            obs_dim,
            store,
            prior_mean,
            prior_logvar,
            decoder,
            emission_logvar,
            class_logits,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn class_probs(&self) -> Vec<f64> {
        math::softmax(self.store.get(self.class_logits).data())
    }

    pub fn set_class_probs(&mut self, probs: &[f64]) -> Result<()> {
        if probs.len() != self.n_classes || probs.iter().any(|&p| p <= 0.0) {
            return Err(Error::InvalidConfig("class probabilities must be positive, one per class".into()));
        }
        let logits: Vec<f64> = probs.iter().map(|&p| math::ln(p)).collect();
        *self.store.get_mut(self.class_logits) = Tensor::row_vector(&logits);
        Ok(())
    }

    pub fn prior_mean(&self, k: usize) -> Vec<f64> {
        self.store.get(self.prior_mean).row(k).to_vec()
    }

    pub fn prior_variance(&self, k: usize) -> Vec<f64> {
        self.store.get(self.prior_logvar).row(k).iter().map(|&v| math::exp(v)).collect()
    }

    pub fn set_prior(&mut self, k: usize, mean: &[f64], var: &[f64]) -> Result<()> {
        let lv = log_variance_row(var)?;
        self.store.get_mut(self.prior_mean).row_mut(k).copy_from_slice(mean);
        self.store.get_mut(self.prior_logvar).row_mut(k).copy_from_slice(lv.data());
        Ok(())
    }

    pub fn emission_variance(&self) -> Vec<f64> {
        self.store.get(self.emission_logvar).data().iter().map(|&v| math::exp(v)).collect()
    }

    pub fn set_emission_variance(&mut self, var: &[f64]) -> Result<()> {
        *self.store.get_mut(self.emission_logvar) = log_variance_row(var)?;
        Ok(())
    }

    /// `log p(z | y = k)`.
    pub fn prior_logpdf(&self, z: &[f64], k: usize) -> f64 {
        diag_gaussian_logpdf(z, &self.prior_mean(k), &self.prior_variance(k))
    }

    pub fn emission_mean(&self, z: &[f64]) -> Vec<f64> {
        self.decoder.apply(&self.store, z)
    }

    pub fn emission_logpdf(&self, x: &[f64], z: &[f64]) -> f64 {
        diag_gaussian_logpdf(x, &self.emission_mean(z), &self.emission_variance())
    }

    /// `n` independent draws `(y, z, x)`.
    pub fn sample(&self, n: usize, seed: u64) -> (Vec<usize>, Tensor, Tensor) {
        let mut rng = rng::seeded(seed);
        let probs = self.class_probs();
        let s_sd: Vec<f64> = self.emission_variance().into_iter().map(math::sqrt).collect();
        let mut y = Vec::with_capacity(n);
        let mut z = Tensor::zeros(n, self.latent_dim);
        let mut x = Tensor::zeros(n, self.obs_dim);
        for i in 0..n {
            let k = rng::categorical(&probs, &mut rng);
            let (m, v) = (self.prior_mean(k), self.prior_variance(k));
            for j in 0..self.latent_dim {
                z.set(i, j, m[j] + math::sqrt(v[j]) * rng::standard_normal(&mut rng));
            }
            let xm = self.emission_mean(z.row(i));
            for j in 0..self.obs_dim {
                x.set(i, j, xm[j] + s_sd[j] * rng::standard_normal(&mut rng));
            }
            y.push(k);
        }
        (y, z, x)
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        self.store.bind(g, trainable)
    }

    pub fn emission_log_rows(&self, g: &mut Graph, p: &Bound, x: Var, z: Var) -> Var {
        emission_rows(g, p, &self.decoder, self.emission_logvar, x, z)
    }

    /// Row-wise `KL(q(z | x, y = k) ‖ p(z | y = k))`, `[T × 1]`.
    pub fn prior_kl_rows(&self, g: &mut Graph, p: &Bound, k: usize, q_mean: Var, q_logvar: Var) -> Var {
        let m = g.slice_rows(p.var(self.prior_mean), k, k + 1);
        let lv = g.slice_rows(p.var(self.prior_logvar), k, k + 1);
        gaussian_kl_rows(g, q_mean, q_logvar, Some(m), Some(lv))
    }

    pub fn class_log_probs_graph(&self, g: &mut Graph, p: &Bound) -> Var {
        g.log_softmax(p.var(self.class_logits))
    }
}

fn identity(n: usize) -> Tensor {
    let mut t = Tensor::zeros(n, n);
    for i in 0..n {
        t.set(i, i, 1.0);
    }
    t
}

fn log_variance_row(var: &[f64]) -> Result<Tensor> {
    if var.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::OutOfRange {
            what: "variance",
            detail: "variances must be positive and finite".into(),
        });
    }
    Ok(Tensor::row_vector(&var.iter().map(|&v| math::ln(v)).collect::<Vec<_>>()))
}
