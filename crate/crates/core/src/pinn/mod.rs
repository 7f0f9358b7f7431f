//! Physics-informed loss, training points, adaptive weights and the
//! training and retraining loops.

mod loss;
mod sampling;
mod train;
mod weights;

pub use loss::{loss_and_gradients, loss_components, loss_exprs, ComponentGradients};
pub use sampling::{sample_collocation, sample_fixed, sample_points, PointSet, SamplingConfig};
pub use train::{
    grad_norms, retrain, retrain_observed, train, train_observed, HistoryEntry, Problem, RetrainMode, TrainError, TrainState,
};
pub use weights::{
    total_loss, update_adaptive_weights, GradNorms, LossWeights, WeightMode, ADAPTIVE_RATE, DEFAULT_CEILING,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::network::NetworkError;

/// Unweighted mean-squared loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub ic: f64,
    pub bc: f64,
    pub res: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PinnError {
    #[error("network output is not finite at (t = {t}, x = {x})")]
    NonFiniteOutput { t: f64, x: f64 },
    #[error("point set is empty")]
    EmptyPointSet,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
