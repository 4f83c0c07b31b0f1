//! Georeferenced rasters, field observations and region partitions.

pub mod container;
pub mod geo;
pub mod observations;
pub mod partition;
pub mod resample;
pub mod stack;
pub mod synth;
pub mod tile;

pub use container::{Dtype, RasterData, RasterFile, RasterHeader, RasterReader};
pub use geo::{BoundingBox, GeoTransform};
pub use observations::{read_observations, write_observations, FieldObservation, SoilOrder, Task};
pub use partition::{RegionPartition, UNASSIGNED};
pub use resample::{upsample_band, Grid};
pub use stack::{load_stack, BandGroup, BandInfo, ChannelStats, CovariateStack};
pub use synth::{generate_synthetic_world, LabelRule, SynthConfig, SynthWorld};
pub use tile::{crop_tile, crop_tile_at_pixel, Tile};
