//! Gaze events, attention profiles and saccade-velocity feature vectors.

pub mod dataset;
pub mod events;
pub mod profile;
pub mod vector;

pub use dataset::{
    balance_classes, make_dataset, read_dataset, write_dataset, ClassCounts, Dataset, DatasetConfig,
    DatasetReport, LearnerSession,
};
pub use events::{collect_events, saccade_velocity, EventKind, EventReport, GazeEvent, SaccadeVelocity};
pub use profile::{learner_profiles, profile, ActivityProfile, ProfileParam, ProfileScope};
pub use vector::{
    moments, window_features, ActivityLabel, FeatureRow, FeatureVector, Moments, WindowSkip,
    FEATURE_NAMES, N_FEATURES,
};
