//! Audit toolkit for vector-quantized world-model codes.

pub mod audit;
pub mod codec;
pub mod conv;
pub mod embed;
pub mod error;
pub mod image;
pub mod optim;
pub mod plot;
pub mod regions;
pub mod report;
pub mod rng;
pub mod saliency;
pub mod stats;
pub mod tensor;
pub mod tsne;
pub mod world;

pub use error::{Error, Result};

/// Version string recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
