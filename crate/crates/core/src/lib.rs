//! Multi-exposure HDR reconstruction with a progressive and selective fusion
//! network: data ingestion, the fusion/reconstruction model, tone-mapped
//! training objective, quantitative metrics, and tiled full-resolution
//! inference.

pub mod conv;
pub mod data;
pub mod config;
pub mod error;
pub mod graph;
pub mod model;
pub mod metrics;
pub mod nn;
pub mod synth;
pub mod tile;
pub mod tonemap;
pub mod trainer;
pub mod util;

pub use error::{Error, Result};
