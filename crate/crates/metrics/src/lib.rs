//! Localization and image-quality scores.
//!
//! Count-derived scores follow one convention: whenever a denominator is zero
//! the score is 0, never NaN.

mod confusion;
mod error;
mod image_level;
pub mod linalg;
pub mod niqe;
pub mod report;
mod ssim;

pub use confusion::{confusion_counts, confusion_counts_values, mcc, prf_iou, ConfusionCounts, Prf};
pub use error::{Error, Result};
pub use image_level::{image_confusion, mcc_image_level, predicted_forged, ImageLabel, DEFAULT_TAU};
pub use niqe::{niqe_fit, niqe_score, NiqeModel};
pub use report::{EvalAccumulator, Report};
pub use ssim::ssim;
pub use integscan_core::{Modality, Task};
