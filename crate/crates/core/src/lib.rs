//! Ranking of co-captured group photos from three perceptual channels:
//! group happiness (a saliency-enforced CNN), aesthetics (a siamese-trained
//! regressor) and no-reference visual quality (natural-scene statistics).
//! Channel scores are fused into a squared-augmented vector and ranked with
//! pooling baselines, a rank SVM or a small siamese ranking network.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aesthetics;
pub mod cli;
pub mod cnn;
pub mod dataset;
pub mod emotion;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod modelfile;
pub mod quality;
pub mod raster;
pub mod synth;

pub use error::{Error, Result};
