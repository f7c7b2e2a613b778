//! Tools for comparing tangent-kernel predictors with weakly regularized two-layer relu
//! networks: the kernel itself, network training and margin measurement, the l1-norm SVM over
//! relu features, a particle simulation of perturbed Wasserstein gradient flow, and numerical
//! probes of the kernel lower-bound argument on a synthetic distribution.

pub mod data;
pub mod error;
pub mod l1svm;
pub mod lowerbound;
pub mod net;
pub mod ntk;
pub mod rng;
pub mod simplex;
pub mod stats;
pub mod wgf;

pub use error::{Error, Result};
pub use rng::Seed;
