//! Generator, refiner and examiner data augmentation for Gaussian-splat
//! human avatars learned from a single monocular video.

pub mod avatar;
pub mod body;
pub mod camera;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod examiner;
pub mod generator;
pub mod image;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod refiner;
pub mod rng;
pub mod splat;

pub use error::{Error, Result};
