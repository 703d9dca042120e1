//! Style-disentangled underwater domain adaptation: synthetic data, networks,
//! objectives, training, metrics and latent analysis.

pub mod checkpoint;
pub mod datasynth;
pub mod error;
pub mod image;
pub mod latentlab;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod trainer;

pub use error::{Error, Result};
pub use image::{DepthMap, Image};
