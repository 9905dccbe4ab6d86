//! Image perturbations at five severities and the sweep that turns them into
//! degradation curves.

mod attack;
mod error;
pub mod jpeg;
mod sweep;

pub use attack::{perturb, perturb_mask, Attack, AttackKind, SEVERITIES};
pub use error::{Error, Result};
pub use sweep::{exceeds_skip_limit, robustness_sweep, CurveRow, Skip, SweepSample, SweepTable, SKIP_LIMIT};
