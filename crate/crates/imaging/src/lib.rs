//! Planar images and binary masks with the handful of classical operations the
//! synthesis, metrics and robustness crates share.

mod error;
pub mod filter;
mod image;
pub mod io;
mod mask;
pub mod morph;
pub mod resample;

pub use error::{Error, Result};
pub use image::Image;
pub use mask::Mask;

/// Rec.601 luma weights for R, G, B.
pub const LUMA_601: [f64; 3] = [0.299, 0.587, 0.114];
