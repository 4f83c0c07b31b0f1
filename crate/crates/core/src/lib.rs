//! Fine-scale soil mapping from multimodal rasters and sparse field
//! observations.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod mosaic;
pub mod objectives;
pub mod provenance;
pub mod rf;
pub mod splits;
pub mod training;

pub use error::{Error, Result};
