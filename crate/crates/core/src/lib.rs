//! Dataset construction toolkit for phenology-aware satellite sampling,
//! plus an evaluation harness for probing frozen embeddings.
//!
//! The pipeline stages are composable: generate an equal-area grid over a
//! land mask, derive per-location season windows from EVI curves, select
//! low-cloud scenes per location-season from a catalog, compute pretraining
//! sampling weights, and persist everything as a JSON-lines manifest.

pub mod catalog;
pub mod config;
pub mod error;
pub mod eval;
pub mod geogrid;
pub mod manifest;
pub mod phenology;
pub mod pipeline;
pub mod raster;
pub mod sampler;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
