//! Scene-aware radar object detection: synthetic radar data, ConfMap
//! supervision, a small convolutional engine, detector and scene-classifier
//! networks, scene-specific post-processing and OLS-based evaluation.

pub mod codec;
pub mod data;
pub mod error;
pub mod eval;
pub mod geom;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod postproc;
pub mod render;
pub mod rng;
pub mod scenemix;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
