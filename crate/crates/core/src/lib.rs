pub mod error;
pub mod experiment;
pub mod frame_select;
pub mod frontend;
pub mod kernels;
pub mod matrix;
pub mod multiclass;
pub mod preprocessing;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::{FeatureMatrix, FrameMatrix, Matrix};
