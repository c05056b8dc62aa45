//! Second-order optimization laboratory built around the saddle-free Newton
//! method.
//!
//! The crate provides
//! - dense symmetric eigen machinery and a matrix-free power method ([`linalg`]),
//! - analytic test landscapes and random-matrix ensembles ([`landscapes`]),
//! - a one-hidden-layer tanh/softmax classifier with exact gradient, Hessian
//!   and Hessian-vector products ([`mlp`]),
//! - gradient descent, momentum SGD, Newton, damped Newton, saddle-free
//!   Newton and a generalized trust-region step, plus the training loop
//!   ([`optimizers`]),
//! - critical-point discovery and spectrum statistics ([`analysis`]),
//! - dataset ingestion and record persistence ([`data`]),
//! - the experiment drivers behind the command line tool ([`experiments`]).

pub mod analysis;
pub mod data;
pub mod error;
pub mod experiments;
pub mod landscapes;
pub mod linalg;
pub mod mlp;
pub mod optimizers;
mod param;

pub use analysis::{CriticalPoint, Origin};
pub use error::{Error, Result};
pub use landscapes::Landscape;
pub use linalg::{EigenDecomposition, SymmetricMatrix};
pub use mlp::{Batch, MlpObjective, MlpShape};
pub use optimizers::{Method, StepConfig, TrainTrace};
pub use param::ParamVector;
