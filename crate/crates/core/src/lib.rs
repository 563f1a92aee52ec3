//! Multi-temporal land-cover mapping: per-scene kernel classification with
//! an import vector machine, GLCM texture features, and spatio-temporal MRF
//! regularization by loopy belief propagation, plus area-adjusted accuracy
//! assessment and a synthetic scenario generator.

pub mod assess;
pub mod config;
pub mod error;
pub mod energy;
pub mod ivm;
pub mod lbp;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod raster;
pub mod synth;
pub mod texture;
pub mod transitions;

pub use error::{Error, Result};
