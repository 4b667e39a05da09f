//! Dense layers shared by the backbone heads and the generative maps.

use alloc::format;
use alloc::vec::Vec;

use crate::graph::{Graph, Var};
use crate::math;
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::{self, SeededRng};
use crate::tensor::Tensor;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// `y = x·W + b` with `W` stored `[in × out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Uniform `±1/√in` initialization.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let bound = 1.0 / math::sqrt(in_dim as f64);
        let weight = store.add(
            format!("{name}.weight"),
            rng::uniform_tensor(in_dim, out_dim, bound, rng),
        );
        let bias = store.add(
            format!("{name}.bias"),
            rng::uniform_tensor(1, out_dim, bound, rng),
        );
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let h = g.matmul(x, p.var(self.weight));
        g.add_row(h, p.var(self.bias))
    }

    /// Applies the layer to a single input vector.
    pub fn apply(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        let w = store.get(self.weight);
        let mut out = store.get(self.bias).data().to_vec();
        for (i, &xi) in x.iter().enumerate() {
            for (o, &wv) in out.iter_mut().zip(w.row(i)) {
                *o += xi * wv;
            }
        }
        out
    }

    /// Overwrites the layer so that `y = A·x + b` for a row-major `A` `[out × in]`.
    pub fn set_affine(&self, store: &mut ParamStore, a: &Tensor, b: &[f64]) {
        *store.get_mut(self.weight) = a.transpose();
        *store.get_mut(self.bias) = Tensor::row_vector(b);
    }
}

/// One-hidden-layer dense network with a leaky-rectifier hidden layer.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
    pub slope: f64,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
        rng: &mut SeededRng,
    ) -> Self {
        Self {
            hidden: Linear::new(store, &format!("{name}.hidden"), in_dim, hidden_dim, rng),
            output: Linear::new(store, &format!("{name}.output"), hidden_dim, out_dim, rng),
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let h = self.hidden.forward(g, p, x);
        let h = g.leaky_relu(h, self.slope);
        self.output.forward(g, p, h)
    }

    pub fn apply(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        let h: Vec<f64> = self
            .hidden
            .apply(store, x)
            .into_iter()
            .map(|v| if v > 0.0 { v } else { self.slope * v })
            .collect();
        self.output.apply(store, &h)
    }
}

/// A map that is either affine or a one-hidden-layer network.
#[derive(Debug, Clone)]
pub enum StateMap {
    Linear(Linear),
    Nonlinear(Mlp),
}

impl StateMap {
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        match self {
            StateMap::Linear(l) => l.forward(g, p, x),
            StateMap::Nonlinear(m) => m.forward(g, p, x),
        }
    }

    pub fn apply(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        match self {
            StateMap::Linear(l) => l.apply(store, x),
            StateMap::Nonlinear(m) => m.apply(store, x),
        }
    }
}
