//! Optimization loop, model-variant dispatch and prediction.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::data::{self, FeatureSequence, Standardizer, UNLABELED};
use crate::error::{Error, Result};
use crate::generative::{DynamicsKind, GmdgmParams, SldsParams};
use crate::graph::Graph;
use crate::inference::{BackboneKind, PosteriorNets, ReparamNoise};
use crate::losses::{self, ElboTerms, LossWeights};
use crate::math;
use crate::params::ParamStore;
use crate::rng::derive_seed;
use crate::tcn::TcnConfig;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelVariant {
    /// Supervised classifier trained on labeled frames only.
    Tcn,
    /// Static mixture model with per-frame posteriors.
    Gmdgm,
    /// Static mixture model with temporal posteriors.
    GmdgmTcn,
    /// Semi-supervised switching linear dynamical system.
    S3lds,
    /// Semi-supervised switching nonlinear dynamical system.
    S3nlds,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 5] = [
        ModelVariant::Tcn,
        ModelVariant::Gmdgm,
        ModelVariant::GmdgmTcn,
        ModelVariant::S3lds,
        ModelVariant::S3nlds,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::Tcn => "tcn",
            ModelVariant::Gmdgm => "gmdgm",
            ModelVariant::GmdgmTcn => "gmdgm_tcn",
            ModelVariant::S3lds => "s3lds",
            ModelVariant::S3nlds => "s3nlds",
        }
    }

    pub fn is_generative(self) -> bool {
        self != ModelVariant::Tcn
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model_variant `{s}`")))
    }
}

/// Continuous latent dimensionality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatentDim {
    /// Principal components explaining this fraction of training variance.
    Auto(f64),
    Fixed(usize),
}

impl fmt::Display for LatentDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LatentDim::Auto(th) => write!(f, "auto-pca-{th}"),
            LatentDim::Fixed(l) => write!(f, "{l}"),
        }
    }
}

impl FromStr for LatentDim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("latent_dim `{s}` is neither an integer nor auto-pca-<fraction>"));
        if let Some(th) = s.strip_prefix("auto-pca-") {
            let th: f64 = th.parse().map_err(|_| bad())?;
            return Ok(LatentDim::Auto(th));
        }
        s.parse().map(LatentDim::Fixed).map_err(|_| bad())
    }
}

/// Which observation features the model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    Position,
    /// Features concatenated with their first differences.
    PositionVelocity,
}

impl FeatureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Position => "position",
            FeatureMode::PositionVelocity => "position_velocity",
        }
    }

    pub fn apply(self, x: &Tensor) -> Tensor {
        match self {
            FeatureMode::Position => x.clone(),
            FeatureMode::PositionVelocity => data::position_velocity(x),
        }
    }

    pub fn output_dim(self, input_dim: usize) -> usize {
        match self {
            FeatureMode::Position => input_dim,
            FeatureMode::PositionVelocity => 2 * input_dim,
        }
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "position" => Ok(FeatureMode::Position),
            "position_velocity" => Ok(FeatureMode::PositionVelocity),
            _ => Err(Error::InvalidConfig(format!("unknown features `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model_variant: ModelVariant,
    pub learning_rate: f64,
    pub n_epochs: usize,
    pub batch_size: usize,
    pub window: usize,
    pub alpha: f64,
    pub anneal_epochs: usize,
    pub seed: u64,
    pub latent_dim: LatentDim,
    pub features: FeatureMode,
    pub tcn: TcnConfig,
    /// Hidden width of the per-frame posterior backbone of the static
    /// mixture model.
    pub gmdgm_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model_variant: ModelVariant::S3lds,
            learning_rate: 1e-4,
            n_epochs: 500,
            batch_size: 8,
            window: 1000,
            alpha: 100.0,
            anneal_epochs: 100,
            seed: 0,
            latent_dim: LatentDim::Auto(0.95),
            features: FeatureMode::Position,
            tcn: TcnConfig::default(),
            gmdgm_hidden: 32,
        }
    }
}

/// Keys accepted by [`TrainConfig::set`], in canonical order.
pub const CONFIG_KEYS: [&str; 16] = [
    "model_variant",
    "learning_rate",
    "n_epochs",
    "batch_size",
    "window",
    "alpha",
    "anneal_epochs",
    "seed",
    "latent_dim",
    "features",
    "tcn.n_blocks",
    "tcn.n_lags",
    "tcn.n_filters",
    "tcn.dropout_p",
    "tcn.leaky_slope",
    "gmdgm.hidden",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("cannot parse `{value}` for `{key}`")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be non-negative, got {}", self.learning_rate));
        }
        if self.n_epochs == 0 {
            return bad("n_epochs must be positive".into());
        }
        if self.batch_size == 0 || self.window == 0 {
            return bad("batch_size and window must be positive".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be non-negative".into());
        }
        match self.latent_dim {
            LatentDim::Auto(th) if !(th > 0.0 && th <= 1.0) => {
                return bad(format!("latent_dim threshold {th} not in (0, 1]"))
            }
            LatentDim::Fixed(0) => return bad("latent_dim must be at least 1".into()),
            _ => {}
        }
        if self.gmdgm_hidden == 0 {
            return bad("gmdgm.hidden must be positive".into());
        }
        self.tcn.validate()?;
        if self.model_variant != ModelVariant::Gmdgm {
            let span = 2 * self.tcn.receptive_field_radius() + 1;
            if self.window < span {
                return bad(format!("window {} shorter than the receptive field ({span} frames)", self.window));
            }
        }
        Ok(())
    }

    /// Canonical `key = value` pairs.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let v = [
            self.model_variant.to_string(),
            self.learning_rate.to_string(),
            self.n_epochs.to_string(),
            self.batch_size.to_string(),
            self.window.to_string(),
            self.alpha.to_string(),
            self.anneal_epochs.to_string(),
            self.seed.to_string(),
            self.latent_dim.to_string(),
            self.features.as_str().to_string(),
            self.tcn.n_blocks.to_string(),
            self.tcn.n_lags.to_string(),
            self.tcn.n_filters.to_string(),
            self.tcn.dropout_p.to_string(),
            self.tcn.leaky_slope.to_string(),
            self.gmdgm_hidden.to_string(),
        ];
        CONFIG_KEYS
            .iter()
            .zip(v)
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    /// Sets one dotted key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "model_variant" => self.model_variant = value.parse()?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "n_epochs" => self.n_epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "anneal_epochs" => self.anneal_epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "latent_dim" => self.latent_dim = value.parse()?,
            "features" => self.features = value.parse()?,
            "tcn.n_blocks" => self.tcn.n_blocks = parse(key, value)?,
            "tcn.n_lags" => self.tcn.n_lags = parse(key, value)?,
            "tcn.n_filters" => self.tcn.n_filters = parse(key, value)?,
            "tcn.dropout_p" => self.tcn.dropout_p = parse(key, value)?,
            "tcn.leaky_slope" => self.tcn.leaky_slope = parse(key, value)?,
            "gmdgm.hidden" => self.gmdgm_hidden = parse(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    fn backbone(&self) -> BackboneKind {
        match self.model_variant {
            ModelVariant::Gmdgm => BackboneKind::Framewise {
                hidden: self.gmdgm_hidden,
            },
            _ => BackboneKind::Temporal(self.tcn.clone()),
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, learning_rate: f64) -> Self {
        let zeros: Vec<Tensor> = store
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One descent step on `store` along `grads` (gradients of the loss).
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) {
        self.step += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.step as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.step as f64);
        for (i, p) in store.tensors_mut().iter_mut().enumerate() {
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                *w -= self.learning_rate * mh / (math::sqrt(vh) + self.eps);
            }
        }
    }
}

/// Generative half of a model.
#[derive(Debug, Clone)]
pub enum Generative {
    None,
    Slds(SldsParams),
    Gmdgm(GmdgmParams),
}

impl Generative {
    pub fn store(&self) -> Option<&ParamStore> {
        match self {
            Generative::None => None,
            Generative::Slds(p) => Some(&p.store),
            Generative::Gmdgm(p) => Some(&p.store),
        }
    }

    pub fn store_mut(&mut self) -> Option<&mut ParamStore> {
        match self {
            Generative::None => None,
            Generative::Slds(p) => Some(&mut p.store),
            Generative::Gmdgm(p) => Some(&mut p.store),
        }
    }
}

/// Per-epoch means of the loss components, per valid frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Minimized objective.
    pub loss: f64,
    /// `−Σ log p(x | z̃)` per frame.
    pub reconstruction: f64,
    pub z_kl: f64,
    pub y_kl: f64,
    /// Weighted cross-entropy of the classifier on labeled frames.
    pub classification: f64,
    pub anneal: f64,
}

impl EpochRecord {
    pub const FIELDS: [&'static str; 7] = [
        "epoch",
        "loss",
        "reconstruction",
        "z_kl",
        "y_kl",
        "classification",
        "anneal",
    ];

    pub fn to_row(&self) -> [f64; 7] {
        [
            self.epoch as f64,
            self.loss,
            self.reconstruction,
            self.z_kl,
            self.y_kl,
            self.classification,
            self.anneal,
        ]
    }

    pub fn from_row(r: &[f64]) -> Self {
        Self {
            epoch: r[0] as usize,
            loss: r[1],
            reconstruction: r[2],
            z_kl: r[3],
            y_kl: r[4],
            classification: r[5],
            anneal: r[6],
        }
    }
}

/// A trained (or freshly initialised) model with everything needed to
/// predict on raw features.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: TrainConfig,
    /// Raw feature dimension before featurization.
    pub input_dim: usize,
    pub n_classes: usize,
    /// Resolved continuous latent dimension, zero for the supervised model.
    pub latent_dim: usize,
    pub standardizer: Standardizer,
    pub posterior: PosteriorNets,
    pub generative: Generative,
    pub history: Vec<EpochRecord>,
}

const POSTERIOR_PREFIX: &str = "posterior.";
const GENERATIVE_PREFIX: &str = "generative.";

impl TrainedModel {
    /// Initial parameters for the given dimensions.
    pub fn init(
        config: &TrainConfig,
        input_dim: usize,
        n_classes: usize,
        latent_dim: usize,
        standardizer: Standardizer,
    ) -> Result<Self> {
        config.validate()?;
        if n_classes < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 classes, got {n_classes}")));
        }
        let obs_dim = config.features.output_dim(input_dim);
        if standardizer.dim() != obs_dim {
            return Err(Error::DimensionMismatch {
                expected: obs_dim,
                found: standardizer.dim(),
            });
        }
        let variant = config.model_variant;
        let l = if variant.is_generative() { Some(latent_dim) } else { None };
        let posterior = PosteriorNets::new(obs_dim, n_classes, l, &config.backbone(), derive_seed(config.seed, 1))?;
        let gseed = derive_seed(config.seed, 2);
        let generative = match variant {
            ModelVariant::Tcn => Generative::None,
            ModelVariant::Gmdgm | ModelVariant::GmdgmTcn => {
                Generative::Gmdgm(GmdgmParams::new(n_classes, latent_dim, obs_dim, gseed)?)
            }
            ModelVariant::S3lds => Generative::Slds(SldsParams::new(
                n_classes,
                latent_dim,
                obs_dim,
                DynamicsKind::Linear,
                gseed,
            )?),
            ModelVariant::S3nlds => Generative::Slds(SldsParams::new(
                n_classes,
                latent_dim,
                obs_dim,
                DynamicsKind::Nonlinear,
                gseed,
            )?),
        };
        Ok(Self {
            config: config.clone(),
            input_dim,
            n_classes,
            latent_dim: if variant.is_generative() { latent_dim } else { 0 },
            standardizer,
            posterior,
            generative,
            history: Vec::new(),
        })
    }

    /// Featurized and standardized observations.
    pub fn prepare(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: x.cols(),
            });
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("features"));
        }
        Ok(self.standardizer.apply(&self.config.features.apply(x)))
    }

    /// Per-frame class probabilities (evaluation mode) and their argmax.
    pub fn predict(&self, x: &Tensor) -> Result<(Vec<usize>, Tensor)> {
        let probs = self.posterior.classify(&self.prepare(x)?, None)?;
        let labels = (0..probs.rows()).map(|t| math::argmax(probs.row(t))).collect();
        Ok((labels, probs))
    }

    /// Backbone features for the supervised model, posterior latent means
    /// under the predicted class otherwise.
    pub fn latents(&self, x: &Tensor) -> Result<Tensor> {
        self.posterior.extract_latents(&self.prepare(x)?)
    }

    /// All parameter tensors with stable names.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self
            .posterior
            .store
            .iter()
            .map(|(n, t)| (format!("{POSTERIOR_PREFIX}{n}"), t.clone()))
            .collect();
        if let Some(s) = self.generative.store() {
            out.extend(s.iter().map(|(n, t)| (format!("{GENERATIVE_PREFIX}{n}"), t.clone())));
        }
        out.push(("standardizer.mean".into(), Tensor::row_vector(&self.standardizer.mean)));
        out.push(("standardizer.std".into(), Tensor::row_vector(&self.standardizer.std)));
        let rows: Vec<f64> = self.history.iter().flat_map(|r| r.to_row()).collect();
        out.push((
            "history".into(),
            Tensor::from_vec(self.history.len(), EpochRecord::FIELDS.len(), rows).expect("history shape"),
        ));
        out
    }

    /// Rebuilds a model from its configuration and named tensors. Every
    /// parameter must be present exactly once.
    pub fn from_named_tensors(
        config: &TrainConfig,
        input_dim: usize,
        n_classes: usize,
        latent_dim: usize,
        tensors: Vec<(String, Tensor)>,
    ) -> Result<Self> {
        let find = |name: &str| {
            tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::MissingParameter(name.into()))
        };
        let mean = find("standardizer.mean")?;
        let std = find("standardizer.std")?;
        let standardizer = Standardizer {
            mean: mean.data().to_vec(),
            std: std.data().to_vec(),
        };
        let history_t = find("history")?;
        let mut model = Self::init(config, input_dim, n_classes, latent_dim.max(1), standardizer)?;
        if !config.model_variant.is_generative() {
            model.latent_dim = 0;
        }
        let mut expected = 3 + model.posterior.store.len();
        for (name, t) in &tensors {
            if let Some(n) = name.strip_prefix(POSTERIOR_PREFIX) {
                model.posterior.store.assign(n, t.clone())?;
            } else if let Some(n) = name.strip_prefix(GENERATIVE_PREFIX) {
                model
                    .generative
                    .store_mut()
                    .ok_or_else(|| Error::MissingParameter(name.clone()))?
                    .assign(n, t.clone())?;
            }
        }
        if let Some(s) = model.generative.store() {
            expected += s.len();
        }
        if tensors.len() != expected {
            return Err(Error::InvalidConfig(format!(
                "expected {expected} tensors, found {}",
                tensors.len()
            )));
        }
        if history_t.cols() != EpochRecord::FIELDS.len() && history_t.rows() > 0 {
            return Err(Error::Shape {
                expected: (history_t.rows(), EpochRecord::FIELDS.len()),
                found: history_t.shape(),
            });
        }
        model.history = (0..history_t.rows())
            .map(|i| EpochRecord::from_row(history_t.row(i)))
            .collect();
        Ok(model)
    }
}

/// Latent dimension chosen for `config` on standardized training features.
pub fn resolve_latent_dim(config: &TrainConfig, train_std: &[FeatureSequence]) -> Result<usize> {
    match config.latent_dim {
        LatentDim::Fixed(l) => Ok(l),
        LatentDim::Auto(th) => {
            let d = train_std[0].dim();
            let n: usize = train_std.iter().map(|s| s.len()).sum();
            let mut all = Vec::with_capacity(n * d);
            for s in train_std {
                all.extend_from_slice(s.features.data());
            }
            data::select_latent_dim(&Tensor::from_vec(n, d, all)?, th)
        }
    }
}

struct StepValues {
    loss: f64,
    reconstruction: f64,
    z_kl: f64,
    y_kl: f64,
    classification_num: f64,
    classification_den: f64,
}

fn check_finite(v: f64, term: &'static str, epoch: usize, batch: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NanLoss { term, epoch, batch })
    }
}

/// Trains `config.model_variant` on `train`. Labels must lie in
/// `{−1, 0..n_classes}`.
pub fn train(config: &TrainConfig, train: &[FeatureSequence], n_classes: usize) -> Result<TrainedModel> {
    train_with_observer(config, train, n_classes, |_| {})
}

/// As [`train`], calling `observe` after every epoch.
pub fn train_with_observer(
    config: &TrainConfig,
    train: &[FeatureSequence],
    n_classes: usize,
    mut observe: impl FnMut(&EpochRecord),
) -> Result<TrainedModel> {
    config.validate()?;
    if train.is_empty() || train.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyTrainingSet);
    }
    let input_dim = train[0].dim();
    for s in train {
        s.validate(Some(n_classes))?;
        if s.dim() != input_dim {
            return Err(Error::DimensionMismatch {
                expected: input_dim,
                found: s.dim(),
            });
        }
    }
    let n_labeled: usize = train.iter().map(|s| s.n_labeled()).sum();
    if config.model_variant == ModelVariant::Tcn && n_labeled == 0 {
        return Err(Error::NoLabeledFrames);
    }

    let featurized: Vec<Tensor> = train.iter().map(|s| config.features.apply(&s.features)).collect();
    let standardizer = Standardizer::fit_matrices(&featurized.iter().collect::<Vec<_>>())?;
    let prepared: Vec<FeatureSequence> = train
        .iter()
        .zip(&featurized)
        .map(|(s, f)| FeatureSequence {
            id: s.id.clone(),
            features: standardizer.apply(f),
            sample_rate_hz: s.sample_rate_hz,
            labels: s.labels.clone(),
        })
        .collect();
    let latent_dim = if config.model_variant.is_generative() {
        resolve_latent_dim(config, &prepared)?
    } else {
        1
    };
    let mut model = TrainedModel::init(config, input_dim, n_classes, latent_dim, standardizer)?;
    let class_weights = losses::class_weights(train.iter().map(|s| s.labels.as_slice()), n_classes);

    let mut adam_post = Adam::new(&model.posterior.store, config.learning_rate);
    let mut adam_gen = model.generative.store().map(|s| Adam::new(s, config.learning_rate));

    for epoch in 0..config.n_epochs {
        let anneal = losses::anneal_weight(epoch, config.anneal_epochs);
        let weights = LossWeights {
            alpha: config.alpha,
            kl_anneal: anneal,
            class_weights: class_weights.clone(),
        };
        let epoch_seed = derive_seed(config.seed, 1000 + epoch as u64);
        let batches = data::make_batches(&prepared, config.batch_size, config.window, epoch_seed)?;
        let mut acc = StepValues {
            loss: 0.0,
            reconstruction: 0.0,
            z_kl: 0.0,
            y_kl: 0.0,
            classification_num: 0.0,
            classification_den: 0.0,
        };
        let mut frames = 0usize;
        let mut loss_units = 0.0;
        for (bi, batch) in batches.enumerate() {
            let batch_seed = derive_seed(epoch_seed, bi as u64);
            let step = batch_step(&mut model, &batch, &weights, batch_seed, epoch, bi, &mut adam_post, adam_gen.as_mut())?;
            frames += batch.n_valid();
            acc.reconstruction += step.reconstruction;
            acc.z_kl += step.z_kl;
            acc.y_kl += step.y_kl;
            acc.classification_num += step.classification_num;
            acc.classification_den += step.classification_den;
            if model.config.model_variant == ModelVariant::Tcn {
                acc.loss += step.loss * step.classification_den;
                loss_units += step.classification_den;
            } else {
                acc.loss += step.loss * batch.n_valid() as f64;
                loss_units += batch.n_valid() as f64;
            }
        }
        let n = frames as f64;
        let record = EpochRecord {
            epoch,
            loss: if loss_units > 0.0 { acc.loss / loss_units } else { 0.0 },
            reconstruction: acc.reconstruction / n,
            z_kl: acc.z_kl / n,
            y_kl: acc.y_kl / n,
            classification: if acc.classification_den > 0.0 {
                acc.classification_num / acc.classification_den
            } else {
                0.0
            },
            anneal,
        };
        observe(&record);
        model.history.push(record);
    }
    Ok(model)
}

#[allow(clippy::too_many_arguments)]
fn batch_step(
    model: &mut TrainedModel,
    batch: &data::Batch,
    weights: &LossWeights,
    batch_seed: u64,
    epoch: usize,
    bi: usize,
    adam_post: &mut Adam,
    adam_gen: Option<&mut Adam>,
) -> Result<StepValues> {
    let mut g = Graph::new();
    let np = model.posterior.bind(&mut g, true);
    let gp = model.generative.store().map(|s| s.bind(&mut g, true));
    let mut objective = Vec::new();
    let mut out = StepValues {
        loss: 0.0,
        reconstruction: 0.0,
        z_kl: 0.0,
        y_kl: 0.0,
        classification_num: 0.0,
        classification_den: 0.0,
    };
    let supervised = model.config.model_variant == ModelVariant::Tcn;
    for (wi, w) in batch.windows.iter().enumerate() {
        let seed = derive_seed(batch_seed, wi as u64);
        let x = g.constant(w.valid_features());
        let labels = w.valid_labels();
        if supervised {
            let logits = model.posterior.logits_graph(&mut g, &np, x, Some(seed));
            let lp = g.log_softmax(logits);
            let (ll, wsum) = losses::weighted_label_log_lik(&mut g, lp, labels, &weights.class_weights)?;
            out.classification_num -= g.scalar(ll);
            out.classification_den += wsum;
            objective.push(ll);
            continue;
        }
        let post = model.posterior.outputs_graph(&mut g, &np, x, Some(seed))?;
        let noise = ReparamNoise::new(model.n_classes, w.valid_len, model.latent_dim, derive_seed(seed, 7));
        let gp = gp.as_ref().expect("generative variants bind generative parameters");
        let ss = match &model.generative {
            Generative::Slds(gen) => losses::elbo_semisupervised(&mut g, gen, gp, x, labels, &post, &noise, weights)?,
            Generative::Gmdgm(gen) => {
                losses::gmdgm_elbo_semisupervised(&mut g, gen, gp, x, labels, &post, &noise, weights)?
            }
            Generative::None => unreachable!("generative variant without generative parameters"),
        };
        let ElboTerms {
            reconstruction,
            z_kl,
            y_kl,
        } = ss.terms;
        out.reconstruction -= check_finite(g.scalar(reconstruction), "reconstruction", epoch, bi)?;
        out.z_kl += check_finite(g.scalar(z_kl), "z_kl", epoch, bi)?;
        out.y_kl += check_finite(g.scalar(y_kl), "y_kl", epoch, bi)?;
        out.classification_num -= check_finite(g.scalar(ss.label_log_lik), "classification", epoch, bi)?;
        out.classification_den += ss.label_weight;
        objective.push(ss.elbo);
    }
    let total = g.add_all(&objective);
    let denom = if supervised {
        out.classification_den
    } else {
        batch.n_valid() as f64
    };
    if denom == 0.0 {
        // a supervised batch without labels carries no signal
        return Ok(out);
    }
    let loss = g.scale(total, -1.0 / denom);
    out.loss = check_finite(g.scalar(loss), if supervised { "classification" } else { "elbo" }, epoch, bi)?;
    let grads = g.backward(loss);
    let gpost = np.gradients(&model.posterior.store, &grads);
    if gpost.iter().any(|t| !t.is_finite()) {
        return Err(Error::NanLoss {
            term: "gradient",
            epoch,
            batch: bi,
        });
    }
    adam_post.step(&mut model.posterior.store, &gpost);
    if let (Some(gp), Some(adam), Some(store)) = (gp, adam_gen, model.generative.store_mut()) {
        let ggen = gp.gradients(store, &grads);
        if ggen.iter().any(|t| !t.is_finite()) {
            return Err(Error::NanLoss {
                term: "gradient",
                epoch,
                batch: bi,
            });
        }
        adam.step(store, &ggen);
    }
    Ok(out)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, math::sqrt(var))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub seeds: Vec<u64>,
    pub macro_f1: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Trains one model per seed (`config.seed + i`) and reports test macro-F1.
pub fn run_experiment(
    config: &TrainConfig,
    train_set: &[FeatureSequence],
    test_set: &[FeatureSequence],
    n_classes: usize,
    n_seeds: usize,
) -> Result<ExperimentSummary> {
    if n_seeds == 0 {
        return Err(Error::InvalidConfig("n_seeds must be at least 1".into()));
    }
    if test_set.is_empty() {
        return Err(Error::InvalidConfig("empty test split".into()));
    }
    let mut seeds = Vec::with_capacity(n_seeds);
    let mut scores = Vec::with_capacity(n_seeds);
    for i in 0..n_seeds {
        let mut cfg = config.clone();
        cfg.seed = config.seed.wrapping_add(i as u64);
        let model = train(&cfg, train_set, n_classes)?;
        let (pred, truth) = predict_split(&model, test_set)?;
        let f1 = crate::metrics::f1_scores(&pred, &truth, n_classes)?;
        seeds.push(cfg.seed);
        scores.push(f1.macro_f1);
    }
    let (mean, std) = mean_std(&scores);
    Ok(ExperimentSummary {
        seeds,
        macro_f1: scores,
        mean,
        std,
    })
}

/// Concatenated predictions and true labels over a split.
pub fn predict_split(model: &TrainedModel, split: &[FeatureSequence]) -> Result<(Vec<i32>, Vec<i32>)> {
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for s in split {
        let (p, _) = model.predict(&s.features)?;
        pred.extend(p.into_iter().map(|v| v as i32));
        truth.extend_from_slice(&s.labels);
    }
    Ok((pred, truth))
}

/// Number of labeled frames across sequences.
pub fn count_labeled(seqs: &[FeatureSequence]) -> usize {
    seqs.iter()
        .map(|s| s.labels.iter().filter(|&&y| y != UNLABELED).count())
        .sum()
}
