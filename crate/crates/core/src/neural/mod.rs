//! Feed-forward ReLU regression networks trained from scratch.
//!
//! Hidden layers apply ReLU, the single output is linear. Targets are
//! z-scored for training and the de-normalization is stored with the
//! network, so `forward` always answers in time units.

mod loss;
mod network;
mod train;

pub use loss::{loss, metrics, LossKind, RegressionMetrics};
pub use network::{Input, Layer, Network, NetworkMeta};
pub use train::{loss_gradient, train, train_samples, ParameterGradient, EpochRecord, Sample, SampleInput, TrainConfig, TrainingReport};

