//! Multi-object tracking with appearance descriptors pooled directly from a
//! detector's feature maps, together with tracking metrics and
//! whole-pipeline FPS benchmarking.

pub mod assignment;
pub mod association;
pub mod bench;
pub mod cli;
pub mod ingest;
pub mod kalman;
pub mod lite;
pub mod metrics;
pub mod tracker;
pub mod types;
