//! Amortized approximate posteriors.
//!
//! `q(y_t | x)` is a backbone followed by a linear softmax head.
//! `q(z_t | x, y_t = k)` is a second backbone with one mean head and one
//! log-variance head per class, so every class branch comes out of a single
//! forward pass. Backbones are the temporal convolutional network or, for the
//! static mixture baseline, a per-frame dense network.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::math;
use crate::nn::{Linear, DEFAULT_LEAKY_SLOPE};
use crate::params::{Bound, ParamStore};
use crate::rng::{self, SeededRng};
use crate::tcn::{TcnBackbone, TcnConfig};
use crate::tensor::Tensor;

/// Which feature extractor feeds the posterior heads.
#[derive(Debug, Clone, PartialEq)]
pub enum BackboneKind {
    Temporal(TcnConfig),
    /// Two dense leaky-rectifier layers applied to each frame independently.
    Framewise { hidden: usize },
}

#[derive(Debug, Clone)]
pub enum Backbone {
    Temporal(TcnBackbone),
    Framewise { first: Linear, second: Linear },
}

impl Backbone {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        kind: &BackboneKind,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        match kind {
            BackboneKind::Temporal(cfg) => Ok(Backbone::Temporal(TcnBackbone::new(
                store,
                name,
                input_dim,
                cfg.clone(),
                rng,
            )?)),
            BackboneKind::Framewise { hidden } => {
                if *hidden == 0 || input_dim == 0 {
                    return Err(Error::InvalidConfig("framewise backbone needs positive widths".into()));
                }
                Ok(Backbone::Framewise {
                    first: Linear::new(store, &format!("{name}.dense1"), input_dim, *hidden, rng),
                    second: Linear::new(store, &format!("{name}.dense2"), *hidden, *hidden, rng),
                })
            }
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Backbone::Temporal(t) => t.output_dim(),
            Backbone::Framewise { second, .. } => second.out_dim,
        }
    }

    /// Frames on each side of `t` that influence output `t`.
    pub fn receptive_field_radius(&self) -> usize {
        match self {
            Backbone::Temporal(t) => t.receptive_field_radius(),
            Backbone::Framewise { .. } => 0,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, dropout_seed: Option<u64>) -> Var {
        match self {
            Backbone::Temporal(t) => t.forward(g, p, x, dropout_seed),
            Backbone::Framewise { first, second } => {
                let h = first.forward(g, p, x);
                let h = g.leaky_relu(h, DEFAULT_LEAKY_SLOPE);
                let h = second.forward(g, p, h);
                g.leaky_relu(h, DEFAULT_LEAKY_SLOPE)
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Encoder {
    backbone: Backbone,
    mean_heads: Vec<Linear>,
    logvar_heads: Vec<Linear>,
}

/// Posterior outputs for one sequence, as graph nodes.
#[derive(Debug, Clone)]
pub struct PosteriorOutputs {
    /// `q(y_t = k | x)`, `[T × K]`.
    pub probs: Var,
    /// `log q(y_t = k | x)`, `[T × K]`.
    pub log_probs: Var,
    /// Per-class means of `q(z_t | x, y_t = k)`, each `[T × L]`.
    pub means: Vec<Var>,
    /// Per-class log-variances, each `[T × L]`.
    pub logvars: Vec<Var>,
}

/// The classifier `q(y | x)` and, for generative variants, the encoder
/// `q(z | x, y)`.
#[derive(Debug, Clone)]
pub struct PosteriorNets {
    pub store: ParamStore,
    input_dim: usize,
    n_classes: usize,
    latent_dim: usize,
    classifier: Backbone,
    classifier_head: Linear,
    encoder: Option<Encoder>,
}

impl PosteriorNets {
    /// `latent_dim = None` builds the classifier alone.
    pub fn new(
        input_dim: usize,
        n_classes: usize,
        latent_dim: Option<usize>,
        kind: &BackboneKind,
        seed: u64,
    ) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::InvalidConfig("posterior needs at least one class".into()));
        }
        let mut rng = rng::seeded(seed);
        let mut store = ParamStore::new();
        let classifier = Backbone::new(&mut store, "classifier", input_dim, kind, &mut rng)?;
        let f = classifier.output_dim();
        let classifier_head = Linear::new(&mut store, "classifier.head", f, n_classes, &mut rng);
        let encoder = match latent_dim {
            None => None,
            Some(0) => return Err(Error::InvalidConfig("latent_dim must be at least 1".into())),
            Some(l) => {
                let backbone = Backbone::new(&mut store, "encoder", input_dim, kind, &mut rng)?;
                let f = backbone.output_dim();
                let mean_heads = (0..n_classes)
                    .map(|k| Linear::new(&mut store, &format!("encoder.mean.{k}"), f, l, &mut rng))
                    .collect();
                let logvar_heads = (0..n_classes)
                    .map(|k| {
                        Linear::new(&mut store, &format!("encoder.logvar.{k}"), f, l, &mut rng)
                    })
                    .collect();
                Some(Encoder {
                    backbone,
                    mean_heads,
                    logvar_heads,
                })
            }
        };
        Ok(Self {
            store,
            input_dim,
            n_classes,
            latent_dim: latent_dim.unwrap_or(0),
            classifier,
            classifier_head,
            encoder,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Zero when the nets hold no encoder.
    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn has_encoder(&self) -> bool {
        self.encoder.is_some()
    }

    pub fn feature_dim(&self) -> usize {
        self.classifier.output_dim()
    }

    pub fn receptive_field_radius(&self) -> usize {
        self.classifier.receptive_field_radius()
    }

    pub fn classifier_head(&self) -> &Linear {
        &self.classifier_head
    }

    /// `(mean, log-variance)` heads of class `k`.
    pub fn encoder_heads(&self, k: usize) -> Option<(&Linear, &Linear)> {
        self.encoder
            .as_ref()
            .map(|e| (&e.mean_heads[k], &e.logvar_heads[k]))
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        self.store.bind(g, trainable)
    }

    /// Class logits `[T × K]`.
    pub fn logits_graph(&self, g: &mut Graph, p: &Bound, x: Var, dropout_seed: Option<u64>) -> Var {
        let seed = dropout_seed.map(|s| rng::derive_seed(s, 0));
        let h = self.classifier.forward(g, p, x, seed);
        self.classifier_head.forward(g, p, h)
    }

    /// Per-class `(mean, log-variance)` nodes from one encoder pass.
    pub fn encode_graph(
        &self,
        g: &mut Graph,
        p: &Bound,
        x: Var,
        dropout_seed: Option<u64>,
    ) -> Result<(Vec<Var>, Vec<Var>)> {
        let enc = self
            .encoder
            .as_ref()
            .ok_or(Error::Unsupported("latent encoding on a classifier-only model"))?;
        let seed = dropout_seed.map(|s| rng::derive_seed(s, 1));
        let h = enc.backbone.forward(g, p, x, seed);
        let means = enc.mean_heads.iter().map(|l| l.forward(g, p, h)).collect();
        let logvars = enc.logvar_heads.iter().map(|l| l.forward(g, p, h)).collect();
        Ok((means, logvars))
    }

    /// Classifier and encoder outputs for one sequence.
    pub fn outputs_graph(
        &self,
        g: &mut Graph,
        p: &Bound,
        x: Var,
        dropout_seed: Option<u64>,
    ) -> Result<PosteriorOutputs> {
        let logits = self.logits_graph(g, p, x, dropout_seed);
        let log_probs = g.log_softmax(logits);
        let probs = g.exp(log_probs);
        let (means, logvars) = self.encode_graph(g, p, x, dropout_seed)?;
        Ok(PosteriorOutputs {
            probs,
            log_probs,
            means,
            logvars,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: x.cols(),
            });
        }
        if x.rows() == 0 {
            return Err(Error::OutOfRange {
                what: "sequence length",
                detail: "T must be at least 1".into(),
            });
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("posterior input"));
        }
        Ok(())
    }

    /// `q(y_t | x)` for every frame, `[T × K]`. `dropout_seed = None` is
    /// evaluation mode.
    pub fn classify(&self, x: &Tensor, dropout_seed: Option<u64>) -> Result<Tensor> {
        self.check_input(x)?;
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let logits = self.logits_graph(&mut g, &p, xv, dropout_seed);
        let probs = g.softmax(logits);
        Ok(g.value(probs).clone())
    }

    /// Mean and variance of `q(z_t | x, y_t = k)`, each `[T × L]`.
    pub fn encode_z(&self, x: &Tensor, k: usize, dropout_seed: Option<u64>) -> Result<(Tensor, Tensor)> {
        self.check_input(x)?;
        if k >= self.n_classes {
            return Err(Error::OutOfRange {
                what: "state index",
                detail: format!("{k} ≥ K={}", self.n_classes),
            });
        }
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let (means, logvars) = self.encode_graph(&mut g, &p, xv, dropout_seed)?;
        let var = g.value(logvars[k]).map(math::exp);
        Ok((g.value(means[k]).clone(), var))
    }

    /// Classifier backbone features `h_t`, `[T × F]`.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let h = self.classifier.forward(&mut g, &p, xv, None);
        Ok(g.value(h).clone())
    }

    /// Posterior mean of `z_t` under the argmax class `ŷ_t`, `[T × L]`.
    pub fn latent_means(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let logits = self.logits_graph(&mut g, &p, xv, None);
        let (means, _) = self.encode_graph(&mut g, &p, xv, None)?;
        let logits = g.value(logits);
        let mut out = Tensor::zeros(x.rows(), self.latent_dim);
        for t in 0..x.rows() {
            let k = math::argmax(logits.row(t));
            out.row_mut(t).copy_from_slice(g.value(means[k]).row(t));
        }
        Ok(out)
    }

    /// Backbone features for classifier-only nets, posterior latent means
    /// otherwise.
    pub fn extract_latents(&self, x: &Tensor) -> Result<Tensor> {
        if self.has_encoder() {
            self.latent_means(x)
        } else {
            self.features(x)
        }
    }
}

/// Standard-normal noise for the reparameterization trick, one `[T × L]`
/// block per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ReparamNoise {
    eps: Vec<Tensor>,
}

impl ReparamNoise {
    pub fn new(n_classes: usize, t_len: usize, latent_dim: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        Self {
            eps: (0..n_classes)
                .map(|_| rng::normal_tensor(t_len, latent_dim, &mut rng))
                .collect(),
        }
    }

    pub fn from_blocks(eps: Vec<Tensor>) -> Self {
        Self { eps }
    }

    pub fn class(&self, k: usize) -> &Tensor {
        &self.eps[k]
    }

    pub fn n_classes(&self) -> usize {
        self.eps.len()
    }
}

/// `z̃ = μ + σ ⊙ ε` on the graph, with `σ = exp(½ log σ²)`.
pub fn reparam_graph(g: &mut Graph, mean: Var, logvar: Var, eps: &Tensor) -> Var {
    let half = g.scale(logvar, 0.5);
    let sd = g.exp(half);
    let noise = g.mul_const(sd, eps.clone());
    g.add(mean, noise)
}

/// `z̃ = μ + σ ⊙ ε` with `ε` drawn from `seed`.
pub fn reparam_sample(mean: &Tensor, var: &Tensor, seed: u64) -> Result<Tensor> {
    if mean.shape() != var.shape() {
        return Err(Error::Shape {
            expected: mean.shape(),
            found: var.shape(),
        });
    }
    if var.data().iter().any(|&v| !(v > 0.0)) {
        return Err(Error::OutOfRange {
            what: "variance",
            detail: "variances must be positive".into(),
        });
    }
    let mut rng = rng::seeded(seed);
    let eps = rng::normal_tensor(mean.rows(), mean.cols(), &mut rng);
    let noise = var.zip_map(&eps, |v, e| math::sqrt(v) * e);
    Ok(mean.zip_map(&noise, |m, n| m + n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_tcn() -> BackboneKind {
        BackboneKind::Temporal(TcnConfig {
            n_filters: 6,
            n_lags: 2,
            ..TcnConfig::default()
        })
    }

    #[test]
    fn zero_head_gives_uniform_probs() {
        let mut nets = PosteriorNets::new(3, 4, Some(2), &small_tcn(), 1).unwrap();
        let head = nets.classifier_head().clone();
        for id in [head.weight, head.bias] {
            let t = nets.store.get_mut(id);
            *t = Tensor::zeros(t.rows(), t.cols());
        }
        let mut r = rng::seeded(2);
        let x = rng::normal_tensor(30, 3, &mut r);
        let p = nets.classify(&x, None).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn zeroed_logvar_head_gives_unit_variance() {
        let mut nets = PosteriorNets::new(3, 2, Some(2), &small_tcn(), 1).unwrap();
        let (_, lv) = nets.encoder_heads(1).unwrap();
        let lv = lv.clone();
        for id in [lv.weight, lv.bias] {
            let t = nets.store.get_mut(id);
            *t = Tensor::zeros(t.rows(), t.cols());
        }
        let x = Tensor::full(7, 3, 0.3);
        let (m, v) = nets.encode_z(&x, 1, None).unwrap();
        assert_eq!(m.shape(), (7, 2));
        assert!(v.data().iter().all(|&s| s == 1.0));
    }

    #[test]
    fn tied_heads_agree_and_untied_differ() {
        let mut nets = PosteriorNets::new(2, 2, Some(3), &small_tcn(), 4).unwrap();
        let x = rng::normal_tensor(12, 2, &mut rng::seeded(1));
        let (m0, _) = nets.encode_z(&x, 0, None).unwrap();
        let (m1, _) = nets.encode_z(&x, 1, None).unwrap();
        assert_ne!(m0, m1);
        let (a, _) = nets.encoder_heads(0).unwrap();
        let (b, _) = nets.encoder_heads(1).unwrap();
        let (a, b) = (a.clone(), b.clone());
        *nets.store.get_mut(b.weight) = nets.store.get(a.weight).clone();
        *nets.store.get_mut(b.bias) = nets.store.get(a.bias).clone();
        let (m0, _) = nets.encode_z(&x, 0, None).unwrap();
        let (m1, _) = nets.encode_z(&x, 1, None).unwrap();
        assert_eq!(m0, m1);
    }

    #[test]
    fn latents_have_expected_widths() {
        let sup = PosteriorNets::new(3, 3, None, &BackboneKind::Temporal(TcnConfig::default()), 1).unwrap();
        let x = Tensor::full(20, 3, 0.1);
        assert_eq!(sup.extract_latents(&x).unwrap().shape(), (20, 32));
        let gen = PosteriorNets::new(3, 3, Some(2), &small_tcn(), 1).unwrap();
        let z = gen.extract_latents(&x).unwrap();
        assert_eq!(z.shape(), (20, 2));
        assert_eq!(z, gen.extract_latents(&x).unwrap());
    }

    #[test]
    fn reparam_limits() {
        let mean = Tensor::from_rows(&[[1.0, -2.0], [0.5, 3.0]]).unwrap();
        let var = Tensor::full(2, 2, 1e-30);
        let z = reparam_sample(&mean, &var, 3).unwrap();
        assert!(z.max_abs_diff(&mean) < 1e-10);
        let var = Tensor::full(2, 2, 2.0);
        assert_eq!(reparam_sample(&mean, &var, 9).unwrap(), reparam_sample(&mean, &var, 9).unwrap());
        assert!(reparam_sample(&mean, &Tensor::zeros(2, 2), 1).is_err());
    }

    #[test]
    fn framewise_backbone_is_pointwise() {
        let nets = PosteriorNets::new(2, 3, Some(2), &BackboneKind::Framewise { hidden: 8 }, 5).unwrap();
        assert_eq!(nets.receptive_field_radius(), 0);
        let mut x = rng::normal_tensor(10, 2, &mut rng::seeded(3));
        let a = nets.classify(&x, None).unwrap();
        x.set(4, 0, 9.0);
        let b = nets.classify(&x, None).unwrap();
        for t in 0..10 {
            let same = a.row(t) == b.row(t);
            assert_eq!(same, t != 4);
        }
    }
}
