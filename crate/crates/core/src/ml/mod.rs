//! Reading vs. video-watching classifiers and their evaluation.

pub mod eval;
pub mod forest;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod standardize;

pub use eval::{evaluate, render_table, EvalReport, Protocol, SplitUnit};
pub use forest::{train_forest, ForestModel, ForestParams, Node, Tree};
pub use metrics::{metrics_from_confusion, ClassMetrics, Confusion, Metrics};
pub use mlp::{train_mlp, Adam, MlpFit, MlpModel, MlpParams};
pub use model::{train, Classifier, Learner, Model, ModelConfig, ModelKind, Prediction, Predictor};
pub use standardize::StandardizerParams;
