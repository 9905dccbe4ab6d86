//! Removal by harmonic inpainting with boundary-matched grain.

use integscan_imaging::filter::box_mean;
use integscan_imaging::{Image, Mask};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::SynthConfig;
use crate::error::{Error, Result};
use crate::irregular::gen_irregular_mask_retrying;
use crate::rng;

const TOLERANCE: f64 = 1e-4;
const MAX_SWEEPS: usize = 5000;

/// Pixels outside `mask` that are 4-adjacent to it.
fn ring(mask: &Mask) -> Vec<usize> {
    let (h, w) = mask.dims();
    (0..h * w)
        .filter(|&i| {
            let (y, x) = (i / w, i % w);
            !mask.bits()[i]
                && ((y > 0 && mask.get(y - 1, x))
                    || (y + 1 < h && mask.get(y + 1, x))
                    || (x > 0 && mask.get(y, x - 1))
                    || (x + 1 < w && mask.get(y, x + 1)))
        })
        .collect()
}

/// Outcome of a Gauss–Seidel solve.
#[derive(Clone, Debug)]
pub struct FillReport {
    pub sweeps: usize,
    pub converged: bool,
}

/// Replaces the pixels of `plane` under `mask` with the discrete harmonic
/// interpolant of the surrounding 1-pixel ring (Dirichlet data). The mask must
/// not touch the border. The result is clamped to the ring's range, which the
/// exact solution satisfies by the maximum principle.
pub fn harmonic_fill(plane: &mut [f64], mask: &Mask) -> Result<FillReport> {
    let (h, w) = mask.dims();
    if plane.len() != h * w {
        return Err(Error::InvalidArgument("plane and mask sizes differ".into()));
    }
    if mask.touches_border() {
        return Err(Error::InvalidArgument("harmonic fill needs a mask clear of the border".into()));
    }
    let interior: Vec<usize> = (0..h * w).filter(|&i| mask.bits()[i]).collect();
    if interior.is_empty() {
        return Ok(FillReport { sweeps: 0, converged: true });
    }
    let boundary = ring(mask);
    let (lo, hi) = boundary.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &i| (a.min(plane[i]), b.max(plane[i])));
    let init = if lo == hi { lo } else { boundary.iter().map(|&i| plane[i]).sum::<f64>() / boundary.len() as f64 };
    for &i in &interior {
        plane[i] = init;
    }
    let mut report = FillReport { sweeps: 0, converged: false };
    while report.sweeps < MAX_SWEEPS {
        report.sweeps += 1;
        let mut max_update: f64 = 0.0;
        for &i in &interior {
            let (n, s, e, wv) = (plane[i - w], plane[i + w], plane[i + 1], plane[i - 1]);
            // Written as an offset from one neighbour so equal neighbours give that value exactly.
            let v = n + ((s - n) + (e - n) + (wv - n)) * 0.25;
            max_update = max_update.max((v - plane[i]).abs());
            plane[i] = v;
        }
        if max_update < TOLERANCE {
            report.converged = true;
            break;
        }
    }
    for &i in &interior {
        plane[i] = plane[i].clamp(lo, hi);
    }
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct RemovalOutput {
    pub forged: Image,
    pub gt: Mask,
    pub mask_seed: u64,
    /// Per-channel grain level estimated on the ring.
    pub noise_sigma: Vec<f64>,
    pub converged: bool,
}

/// Erases an irregular region: harmonic fill per channel, then Gaussian grain
/// whose σ is the standard deviation of the 3×3 high-pass residual on the ring.
pub fn synth_removal(image: &Image, seed: u64, cfg: &SynthConfig) -> Result<RemovalOutput> {
    cfg.validate()?;
    let (channels, h, w) = image.dims();
    if h < 32 || w < 32 {
        return Err(Error::InvalidArgument(format!("image must be at least 32x32, got {h}x{w}")));
    }
    let mask = gen_irregular_mask_retrying(h, w, seed, cfg.area_range, 50)?;
    let boundary = ring(&mask.bitmap);
    let mut rng = rng::stream(seed, rng::NOISE);
    let mut forged = image.clone();
    let mut noise_sigma = Vec::with_capacity(channels);
    let mut converged = true;
    for c in 0..channels {
        let plane = image.plane(c);
        let local = box_mean(plane, h, w, 1)?;
        let residual: Vec<f64> = boundary.iter().map(|&i| plane[i] - local[i]).collect();
        let mean = residual.iter().sum::<f64>() / residual.len() as f64;
        let sigma = (residual.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / residual.len() as f64).sqrt();
        let out = forged.plane_mut(c);
        let report = harmonic_fill(out, &mask.bitmap)?;
        converged &= report.converged;
        if sigma > 0.0 {
            for (i, &m) in mask.bitmap.bits().iter().enumerate() {
                if m {
                    let z: f64 = rng.sample(StandardNormal);
                    out[i] = (out[i] + sigma * z).clamp(0.0, 1.0);
                }
            }
        }
        noise_sigma.push(sigma);
    }
    if !converged {
        eprintln!("warning: harmonic fill for seed {seed} stopped after {MAX_SWEEPS} sweeps; keeping the last iterate");
    }
    Ok(RemovalOutput { forged, gt: mask.bitmap, mask_seed: mask.seed, noise_sigma, converged })
}
