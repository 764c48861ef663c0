//! Simulation of raw-like (L0) satellite products from processed imagery,
//! restoration and Brovey pansharpening back to L1-like products, detection
//! tile datasets, and detector evaluation.

pub mod error;
pub mod metrics;
pub mod pansharp;
pub mod pipeline;
pub mod preview;
pub mod raster;
pub mod restore;
pub mod rng;
pub mod sensor;
pub mod stats;
pub mod synth;
pub mod tiling;

pub use error::{Error, Result};
