//! Gaze analytics: eye-tracker ingestion, activity tagging, fixation and
//! saccade statistics, ANOVA across learner populations, attention
//! heatmaps, and reading vs. video-watching classifiers.

pub mod config;
pub mod error;
pub mod exec;
pub mod features;
pub mod heatmap;
pub mod ingest;
pub mod ml;
pub mod pipeline;
pub mod seed;
pub mod serde_ext;
pub mod stats;
pub mod store;
pub mod synth;
pub mod timeline;

pub use config::Config;
pub use error::{Error, ErrorClass, Result};
pub use exec::Exec;
