use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry and blending parameters shared by the synthesis tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Admissible area fraction of every irregular region.
    pub area_range: (f64, f64),
    /// Uniform jitter added to the right-angle rotation, in degrees (±).
    pub jitter_deg: f64,
    pub scale_range: (f64, f64),
    pub feather_sigma: f64,
    /// Probability that a duplication uses a pure right-angle rotation at unit
    /// scale, which is resampled by nearest neighbour and therefore exact.
    pub right_angle_probability: f64,
    pub placement_tries: usize,
    /// Number of 0.9× scale reductions attempted after placement fails.
    pub shrink_steps: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            area_range: (0.02, 0.15),
            jitter_deg: 15.0,
            scale_range: (0.8, 1.25),
            feather_sigma: 2.0,
            right_angle_probability: 0.25,
            placement_tries: 100,
            shrink_steps: 6,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let (lo, hi) = self.area_range;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return bad(format!("area_range must satisfy 0 < lo < hi < 1, got {:?}", self.area_range));
        }
        let (slo, shi) = self.scale_range;
        if !(0.0 < slo && slo < shi && shi.is_finite()) {
            return bad(format!("scale_range must satisfy 0 < lo < hi, got {:?}", self.scale_range));
        }
        if !(self.jitter_deg > 0.0 && self.jitter_deg < 45.0) {
            return bad(format!("jitter_deg must lie in (0, 45), got {}", self.jitter_deg));
        }
        if !(self.feather_sigma >= 0.0 && self.feather_sigma.is_finite()) {
            return bad(format!("feather_sigma must be finite and >= 0, got {}", self.feather_sigma));
        }
        if !(0.0..=1.0).contains(&self.right_angle_probability) {
            return bad(format!("right_angle_probability must lie in [0, 1], got {}", self.right_angle_probability));
        }
        if self.placement_tries == 0 {
            return bad("placement_tries must be at least 1".into());
        }
        Ok(())
    }

    /// Source-region area range for duplications, narrowed so that any scale in
    /// `scale_range` keeps the pasted copy inside `area_range`.
    pub fn duplication_source_range(&self) -> (f64, f64) {
        let (lo, hi) = self.area_range;
        let (slo, shi) = self.scale_range;
        let (a, b) = (lo / (slo * slo), hi / (shi * shi));
        // Rasterization moves the pasted area by a few percent either way.
        let (a, b) = (a * 1.1, b * 0.95);
        if a < b {
            (a, b)
        } else {
            let mid = 0.5 * (lo + hi);
            (mid, mid * 1.05)
        }
    }
}
