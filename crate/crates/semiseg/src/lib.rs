//! File formats, checkpoints and run orchestration for `semiseg-core`.
//!
//! Everything here touches the filesystem; the numerical work lives in the
//! `no_std` core crate, re-exported as [`core`].

pub mod checkpoint;
pub mod csv_io;
pub mod error;
pub mod kv;
pub mod manifest;
pub mod report;
pub mod run;
pub mod simulate;

pub use error::{IoError, IoResult};
pub use semiseg_core as core;
