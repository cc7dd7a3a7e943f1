//! End-to-end training of the weight estimator and refiner.

pub mod adam;
pub mod fit;
pub mod loss;
pub mod pipeline;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use fit::{fit, write_history_csv, EpochRecord, TrainConfig, TrainHistory};
pub use loss::bce_loss;
pub use pipeline::{chain_gradient_check, chain_gradients, Pipeline, Sample};
