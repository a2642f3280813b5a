//! Small CNN for snore / non-snore classification of feature images.

mod eval;
mod model;
mod network;
mod train;
mod weights;

use thiserror::Error;

pub use eval::{evaluate, Classify, Confusion, EvalReport};
pub use model::{
    pooled_sides, ConvLayer, DenseLayer, ModelParams, CONV_KERNEL, DEFAULT_FILTERS, DENSE_WIDTHS, NUM_CLASSES,
};
pub use network::{backward, batch_loss, cross_entropy, forward, softmax, ForwardPass, Gradients, Mode, Prediction};
pub use train::{
    loss_and_accuracy, lr_schedule, stratified_split, train, Dataset, EpochRecord, History, Optimizer, TrainConfig,
    TrainOutcome,
};
pub use weights::{
    decode_params, encode_params, load_params, load_params_for_side, save_params, FORMAT_VERSION, MAGIC,
};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("bad training data: {0}")]
    Data(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("weights checksum mismatch (stored {stored:#010x}, computed {actual:#010x})")]
    Corrupt { stored: u32, actual: u32 },
    #[error("malformed weights file: {0}")]
    Format(String),
    #[error("unsupported weights format version {0}")]
    UnsupportedVersion(u16),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
