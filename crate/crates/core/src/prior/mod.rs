//! The learnable shape prior: per-view encoder, mean pooling, canonical
//! decoder, and its reprojection-error training.

mod grad;
mod model;
mod train;

pub use grad::{fixed_camera_gradient, fixed_camera_loss, gradient_check, FD_STEP};
pub use model::{input_scale_for, Activation, Dense, PriorModel, Reconstruction, ShapeCode};
pub use train::{train_prior, train_prior_on_frames, TrainConfig};
