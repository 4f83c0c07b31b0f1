//! Two-tower encoder, implicit decoders, coordinate encoder and heads.

pub mod encoder;
pub mod geo;
pub mod gradcheck;
pub mod layers;
pub mod liif;
pub mod miso;

pub use encoder::{AttentionMode, EncoderConfig, SwinEncoder};
pub use geo::{positional_encode, GeoEncoder};
pub use layers::ParamStore;
pub use liif::{query_corners, Aggregation, Corner};
pub use miso::{probabilities, CheckpointInfo, Embeddings, MisoModel, ModelConfig, ModelContext, CHECKPOINT_FORMAT};
