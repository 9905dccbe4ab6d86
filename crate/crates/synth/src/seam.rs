//! Cut/shift tampering: a band is displaced along its own axis, leaving two
//! sharp transitions.

use integscan_imaging::{Image, Mask};
use rand::Rng;

use crate::config::SynthConfig;
use crate::error::{Error, Result};
use crate::rng;

/// The displaced band. For a horizontal band `first..=last` are rows and the
/// content moved along x by `shift`; for a vertical band they are columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Band {
    pub horizontal: bool,
    pub first: usize,
    pub last: usize,
    pub shift: i64,
}

impl Band {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        let i = if self.horizontal { y } else { x };
        (self.first..=self.last).contains(&i)
    }
}

#[derive(Clone, Debug)]
pub struct CstdOutput {
    pub forged: Image,
    /// Both seams, each three lines wide.
    pub gt: Mask,
    pub band: Band,
}

/// Shifts a seeded band by 10–25 % of the extent with edge-clamp fill. The band
/// spans 15–35 % of the perpendicular extent and never touches the border.
/// `cfg` is validated but no field changes the construction.
pub fn synth_cstd(image: &Image, seed: u64, cfg: &SynthConfig) -> Result<CstdOutput> {
    cfg.validate()?;
    let (channels, h, w) = image.dims();
    if h < 32 || w < 32 {
        return Err(Error::InvalidArgument(format!("image must be at least 32x32, got {h}x{w}")));
    }
    let mut rng = rng::stream(seed, rng::SEAM);
    let horizontal = rng.random_bool(0.5);
    let (across, along) = if horizontal { (h, w) } else { (w, h) };
    // At least five lines so the two three-line seams stay apart.
    let thickness = ((rng.random_range(0.15..=0.35) * across as f64).round() as usize).max(5);
    let first = rng.random_range(2..=across - thickness - 2);
    let last = first + thickness - 1;
    let magnitude = ((rng.random_range(0.10..=0.25) * along as f64).round() as i64).max(1);
    let shift = if rng.random_bool(0.5) { magnitude } else { -magnitude };
    let band = Band { horizontal, first, last, shift };

    let mut forged = image.clone();
    for c in 0..channels {
        for i in first..=last {
            for j in 0..along {
                let src = (j as i64 - shift).clamp(0, along as i64 - 1) as usize;
                let (y, x, sy, sx) = if horizontal { (i, j, i, src) } else { (j, i, src, i) };
                forged.set(c, y, x, image.get(c, sy, sx));
            }
        }
    }
    let seam = |i: usize| (first - 1..=first + 1).contains(&i) || (last - 1..=last + 1).contains(&i);
    let gt = Mask::from_fn(h, w, |y, x| seam(if horizontal { y } else { x }))?;
    Ok(CstdOutput { forged, gt, band })
}
