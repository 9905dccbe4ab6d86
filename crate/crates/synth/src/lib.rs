//! Deterministic forgery synthesis with pixel-accurate ground truth.
//!
//! Every generator is a pure function of `(image, seed, config)`. The four
//! manipulation families are internal duplication ([`synth_idd`]), external
//! duplication ([`synth_edd`]), cut/shift seams ([`synth_cstd`]) and removal by
//! harmonic inpainting ([`synth_removal`]).

mod config;
pub mod corpus;
mod error;
mod irregular;
mod manifest;
mod removal;
mod rng;
mod seam;
pub mod texture;
mod transform;

pub use config::SynthConfig;
pub use error::{Error, Result};
pub use irregular::{gen_irregular_mask, gen_irregular_mask_retrying, IrregularMask};
pub use manifest::{read_manifest, write_manifest, ForgeryRecord};
pub use removal::{harmonic_fill, synth_removal, RemovalOutput};
pub use seam::{synth_cstd, Band, CstdOutput};
pub use transform::{
    composite_transformed, feather_alpha, feather_radius, synth_edd, synth_idd, DuplicationOutput, EddOutput, Transform,
};

pub use integscan_core::{Modality, Split, Task};
