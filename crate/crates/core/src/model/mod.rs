//! The Integscan forgery-localization network.

pub mod block;
pub mod checkpoint;
pub mod config;
pub mod layers;
pub mod network;
pub mod prompt;
pub mod train;

pub use config::{ModelConfig, SsmMode};
pub use network::{MaskPrediction, Model, ModelParams};
pub use prompt::PromptTokens;
pub use train::{Adam, Sample};
