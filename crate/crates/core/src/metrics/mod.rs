//! Classifier-based Inception Score for shape image collections.

mod classifier;
mod inception;

pub use classifier::{
    train_classifier, train_classifier_unchecked, ClassifierOptions, ShapeClassifier, NUM_CLASSES,
};
pub use inception::{inception_score, score_collection, ISResult, ProbMatrix};

use crate::autodiff::AdError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("classifier under-trained: validation accuracy {accuracy:.4} below target {target:.2}")]
    UnderTrained { accuracy: f64, target: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Ad(#[from] AdError),
}
