//! Residual convolutional regressor from plate bitmaps to normalized
//! (resonance frequency, |S21|) pairs, trained with momentum SGD on an L1
//! objective.

mod config;
mod conv;
mod gradcheck;
mod io;
mod model;
mod train;
mod weights;

pub use config::{InputEncoding, SurrogateConfig, TargetNormalizer, TrainConfig, HEAD_HIDDEN, OUTPUTS, STAGES};
pub use gradcheck::{gradient_check, GradientCheck, GradientMismatch};
pub use io::{decode_weights, encode_weights, load_weights, save_weights, MAGIC, VERSION};
pub use model::{build_model, expected_layout, loss_and_gradients, stage_sides, SurrogateModel};
pub use train::{
    history_csv, mae, predict_physical, sgd_step, split_indices, train, train_model, EpochMetrics, PhysicalMae, TrainOutcome,
};
pub use weights::{ModelWeights, Tensor};
