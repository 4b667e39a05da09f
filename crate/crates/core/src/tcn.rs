//! Dilated, non-causal temporal convolutional network.
//!
//! Each block holds two sub-blocks (convolution → leaky rectifier → dropout)
//! and a residual connection from the block input to its output. Block `b`
//! (counting from zero) uses dilation `2^b`; every convolution sees
//! `n_lags` frames on each side of the centre tap.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::math;
use crate::nn::{Linear, DEFAULT_LEAKY_SLOPE};
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::{self, SeededRng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TcnConfig {
    pub n_blocks: usize,
    pub n_lags: usize,
    pub n_filters: usize,
    pub dropout_p: f64,
    pub leaky_slope: f64,
}

impl Default for TcnConfig {
    fn default() -> Self {
        Self {
            n_blocks: 2,
            n_lags: 4,
            n_filters: 32,
            dropout_p: 0.10,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }
}

impl TcnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("tcn: {msg}")));
        if self.n_blocks == 0 {
            return bad("n_blocks must be at least 1");
        }
        if self.n_lags == 0 {
            return bad("n_lags must be at least 1");
        }
        if self.n_filters == 0 {
            return bad("n_filters must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout_p must lie in [0, 1)");
        }
        if !self.leaky_slope.is_finite() {
            return bad("leaky_slope must be finite");
        }
        Ok(())
    }

    /// Number of frames on each side of `t` that can influence output `t`.
    pub fn receptive_field_radius(&self) -> usize {
        // two convolutions per block at dilation 2^b
        (0..self.n_blocks).map(|b| 2 * self.n_lags << b).sum()
    }
}

/// Free-function form of [`TcnConfig::receptive_field_radius`].
pub fn receptive_field_radius(config: &TcnConfig) -> usize {
    config.receptive_field_radius()
}

#[derive(Debug, Clone)]
struct Conv {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
struct Block {
    conv1: Conv,
    conv2: Conv,
    projection: Option<Linear>,
    dilation: usize,
}

#[derive(Debug, Clone)]
pub struct TcnBackbone {
    config: TcnConfig,
    input_dim: usize,
    blocks: Vec<Block>,
}

impl TcnBackbone {
    /// Registers the backbone's parameters in `store` under `name`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        config: TcnConfig,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::InvalidConfig("tcn: input_dim must be at least 1".into()));
        }
        let taps = 2 * config.n_lags + 1;
        let f = config.n_filters;
        let conv = |store: &mut ParamStore, tag: &str, cin: usize, rng: &mut SeededRng| {
            let bound = 1.0 / math::sqrt((cin * taps) as f64);
            Conv {
                weight: store.add(
                    format!("{name}.{tag}.weight"),
                    rng::uniform_tensor(taps * cin, f, bound, rng),
                ),
                bias: store.add(
                    format!("{name}.{tag}.bias"),
                    rng::uniform_tensor(1, f, bound, rng),
                ),
            }
        };
        let mut blocks = Vec::with_capacity(config.n_blocks);
        for b in 0..config.n_blocks {
            let cin = if b == 0 { input_dim } else { f };
            let conv1 = conv(store, &format!("block{b}.conv1"), cin, rng);
            let conv2 = conv(store, &format!("block{b}.conv2"), f, rng);
            let projection = (cin != f)
                .then(|| Linear::new(store, &format!("{name}.block{b}.residual"), cin, f, rng));
            blocks.push(Block {
                conv1,
                conv2,
                projection,
                dilation: 1 << b,
            });
        }
        Ok(Self {
            config,
            input_dim,
            blocks,
        })
    }

    pub fn config(&self) -> &TcnConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.config.n_filters
    }

    pub fn receptive_field_radius(&self) -> usize {
        self.config.receptive_field_radius()
    }

    /// Runs the backbone on `x` `[T × D]`, returning `[T × n_filters]`.
    ///
    /// `dropout_seed = None` is evaluation mode; `Some(seed)` draws dropout
    /// masks from `seed`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, dropout_seed: Option<u64>) -> Var {
        let mut rng = dropout_seed.map(rng::seeded);
        let lags = self.config.n_lags;
        let slope = self.config.leaky_slope;
        let mut h = x;
        for block in &self.blocks {
            let mut u = h;
            for conv in [&block.conv1, &block.conv2] {
                u = g.conv1d(u, p.var(conv.weight), p.var(conv.bias), lags, block.dilation);
                u = g.leaky_relu(u, slope);
                if let Some(rng) = rng.as_mut() {
                    u = self.dropout(g, u, rng);
                }
            }
            let residual = match &block.projection {
                Some(proj) => proj.forward(g, p, h),
                None => h,
            };
            h = g.add(u, residual);
        }
        h
    }

    fn dropout(&self, g: &mut Graph, u: Var, rng: &mut SeededRng) -> Var {
        let p = self.config.dropout_p;
        if p == 0.0 {
            return u;
        }
        let (n, m) = g.shape(u);
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..n * m)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        g.mul_const(u, Tensor::from_vec(n, m, mask).expect("mask shape"))
    }

    /// Convenience evaluation of the backbone outside a training graph.
    pub fn eval(&self, store: &ParamStore, x: &Tensor, dropout_seed: Option<u64>) -> Result<Tensor> {
        if x.cols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: x.cols(),
            });
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("tcn input"));
        }
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let h = self.forward(&mut g, &p, xv, dropout_seed);
        Ok(g.value(h).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(config: TcnConfig, d: usize, seed: u64) -> (ParamStore, TcnBackbone) {
        let mut store = ParamStore::new();
        let mut rng = rng::seeded(seed);
        let net = TcnBackbone::new(&mut store, "tcn", d, config, &mut rng).unwrap();
        (store, net)
    }

    #[test]
    fn radius_formula() {
        assert_eq!(TcnConfig::default().receptive_field_radius(), 24);
        let one = TcnConfig {
            n_blocks: 1,
            ..TcnConfig::default()
        };
        assert_eq!(one.receptive_field_radius(), 8);
        let three = TcnConfig {
            n_blocks: 3,
            n_lags: 2,
            ..TcnConfig::default()
        };
        assert_eq!(three.receptive_field_radius(), 28);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let cfg = TcnConfig {
            dropout_p: 0.0,
            ..TcnConfig::default()
        };
        let (mut store, net) = net(cfg, 3, 1);
        for t in store.tensors_mut() {
            *t = Tensor::zeros(t.rows(), t.cols());
        }
        let mut rng = rng::seeded(5);
        let x = rng::normal_tensor(40, 3, &mut rng);
        let y = net.eval(&store, &x, Some(3)).unwrap();
        assert_eq!(y.shape(), (40, 32));
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_residual_when_channels_match() {
        let cfg = TcnConfig {
            n_filters: 3,
            ..TcnConfig::default()
        };
        let (store, net) = net(cfg, 3, 2);
        assert!(net.blocks.iter().all(|b| b.projection.is_none()));
        assert_eq!(store.len(), 8);
    }

    #[test]
    fn eval_is_deterministic_and_train_mode_follows_seed() {
        let (store, net) = net(TcnConfig::default(), 2, 3);
        let mut rng = rng::seeded(1);
        let x = rng::normal_tensor(60, 2, &mut rng);
        assert_eq!(net.eval(&store, &x, None), net.eval(&store, &x, None));
        let a = net.eval(&store, &x, Some(11)).unwrap();
        assert_eq!(a, net.eval(&store, &x, Some(11)).unwrap());
        assert_ne!(a, net.eval(&store, &x, Some(12)).unwrap());
    }

    #[test]
    fn shape_holds_for_short_sequences() {
        let (store, net) = net(TcnConfig::default(), 2, 4);
        for t in [1, 2, 5, 30] {
            let x = Tensor::full(t, 2, 0.5);
            assert_eq!(net.eval(&store, &x, None).unwrap().shape(), (t, 32));
        }
    }

    #[test]
    fn rejects_non_finite_input_and_bad_config() {
        let (store, net) = net(TcnConfig::default(), 1, 4);
        let x = Tensor::column_vector(&[0.0, f64::NAN]);
        assert!(net.eval(&store, &x, None).is_err());
        let bad = TcnConfig {
            dropout_p: 1.0,
            ..TcnConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
