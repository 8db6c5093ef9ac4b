//! Flow-guided video frame interpolation with a conditional normalizing-flow
//! synthesis network.
//!
//! The pipeline interpolates a frame at time `t` between two reference frames:
//!
//! 1. [`pyramid`] encodes both frames into dyadic feature pyramids.
//! 2. [`warp`] provides the differentiable warping primitives: backward
//!    (bilinear gather) warping, average and softmax forward splatting, flow
//!    rescaling and occlusion-mask extraction.
//! 3. [`asb`] blends the two aligned pyramids asymmetrically: one side carries
//!    the primary content, the other fills occlusions, gated by a sparse
//!    quasi-binary mask.
//! 4. [`normflow`] decodes the blended pyramid into the output frame through
//!    an invertible network with exact log-determinants, so the model trains
//!    by negative log-likelihood and samples with a temperature knob.
//!
//! Training runs on synthetic triplets with analytic ground-truth flows
//! ([`data`]), or on externally supplied Middlebury `.flo` files ([`flo`]).
//! Everything is CPU-only `f64`; gradients come from the reverse-mode tape in
//! [`graph`] and are validated against finite differences in the test suite.

pub mod asb;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod flo;
pub mod graph;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod normflow;
pub mod ops;
pub mod optim;
pub mod layers;
pub mod params;
pub mod pipeline;
pub mod pngio;
pub mod pyramid;
pub mod rng;
pub mod tensor;
pub mod trainer;
pub mod types;
pub mod warp;

pub use error::{Error, Result};
pub use tensor::Tensor;
