//! Shot-aware multimodal video summarization.
//!
//! The pipeline fuses frame, audio and caption features, refines them with a
//! stack of multi-scale ShotConv layers, scores every frame, and turns the
//! scores into a budgeted summary via kernel temporal segmentation and a 0/1
//! knapsack. All gradients are hand-derived and checked against finite
//! differences.

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod model;
pub mod nn;
pub mod shotconv;
pub mod summarize;
pub mod train;

pub use config::RunConfig;
pub use data::VideoRecord;
pub use error::{Error, Result};
pub use model::{count_params, Model, ModelConfig, ModelInput, ParamCount, Sharing};
pub use train::{train_model, TrainConfig, TrainHistory};
