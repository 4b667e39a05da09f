//! Semi-supervised action segmentation of behavioral time series.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every numerical piece:
//! a small reverse-mode autodiff engine, the dilated temporal convolutional
//! backbone, the recurrent switching (non)linear dynamical system and the
//! static Gaussian-mixture generative models, their amortized posteriors,
//! the variational objectives, the training loop and evaluation metrics.
//! File formats and the command-line interface live in the `semiseg` crate.

#![no_std]

extern crate alloc;

pub mod error;
pub mod generative;
pub mod data;
pub mod graph;
pub mod inference;
pub mod linalg;
pub mod losses;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod params;
pub mod rng;
pub mod tcn;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use params::{ParamId, ParamStore};
pub use tcn::{TcnBackbone, TcnConfig};
pub use tensor::Tensor;
