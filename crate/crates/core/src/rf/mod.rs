//! Random forest baseline over buffer-averaged covariates and coordinates.

pub mod cv;
pub mod features;
pub mod forest;
pub mod search;
pub mod tree;

pub use cv::{rf_fold, FoldSearch, RfFold};
pub use features::{disk_members, extract_features, feature_names};
pub use forest::{sqrt_features, train_rf, Forest, RFConfig};
pub use search::{random_search, SearchResult, SearchSpace};
