use integscan_imaging::filter::gaussian_blur_plane;
use integscan_imaging::morph::{close, component_count, components, largest_component};
use integscan_imaging::Mask;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

/// Single organic blob with no border contact.
#[derive(Clone, Debug, PartialEq)]
pub struct IrregularMask {
    pub bitmap: Mask,
    pub area_fraction: f64,
    pub component_count: usize,
    pub seed: u64,
}

const BISECTION_STEPS: usize = 40;
const CLOSE_RADIUS: usize = 2;
/// Field samples this close to the border are excluded before thresholding, so
/// the closing (which stays inside the CLOSE_RADIUS dilation) never reaches
/// the outermost row or column.
const MARGIN: usize = CLOSE_RADIUS + 1;

fn largest_fraction(field: &[f64], h: usize, w: usize, t: f64) -> (f64, Mask) {
    let m = Mask::new(h, w, field.iter().map(|&v| v >= t).collect()).expect("field extents");
    let c = components(&m);
    let size = c.sizes.iter().copied().max().unwrap_or(0);
    (size as f64 / (h * w) as f64, m)
}

/// Thresholded Gaussian random field: white noise, blur with σ = min(h, w)/16,
/// bisection on the threshold until the largest component's area fraction lies
/// in `area_range`, closing with radius 2, then the largest component.
pub fn gen_irregular_mask(h: usize, w: usize, seed: u64, area_range: (f64, f64)) -> Result<IrregularMask> {
    if h < 32 || w < 32 {
        return Err(Error::InvalidArgument(format!("irregular masks need at least 32x32, got {h}x{w}")));
    }
    let (lo, hi) = area_range;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(Error::InvalidArgument(format!("bad area range {area_range:?}")));
    }
    let mut rng = rng::stream(seed, rng::MASK);
    let noise: Vec<f64> = (0..h * w).map(|_| rng.sample(StandardNormal)).collect();
    let mut field = gaussian_blur_plane(&noise, h, w, h.min(w) as f64 / 16.0)?;
    for y in 0..h {
        for x in 0..w {
            if y < MARGIN || x < MARGIN || y >= h - MARGIN || x >= w - MARGIN {
                field[y * w + x] = f64::NEG_INFINITY;
            }
        }
    }
    // Aim for a seeded target inside the range so blob sizes vary.
    let target = rng.random_range(lo + 0.1 * (hi - lo)..hi - 0.1 * (hi - lo));

    let finite = field.iter().copied().filter(|v| v.is_finite());
    let (mut t_lo, mut t_hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let mut best: Option<(f64, Mask)> = None;
    for _ in 0..BISECTION_STEPS {
        let t = 0.5 * (t_lo + t_hi);
        let (frac, m) = largest_fraction(&field, h, w, t);
        if (lo..=hi).contains(&frac) && best.as_ref().map_or(true, |(f, _)| (frac - target).abs() < (f - target).abs()) {
            best = Some((frac, m));
        }
        if (frac - target).abs() <= 0.02 * (hi - lo) {
            break;
        }
        // Largest-component area is non-increasing in the threshold.
        if frac > target {
            t_lo = t;
        } else {
            t_hi = t;
        }
    }
    let Some((_, raw)) = best else {
        return Err(Error::Generation(format!("seed {seed}: no threshold puts the largest component in {area_range:?}")));
    };
    let bitmap = largest_component(&close(&largest_component(&raw)?, CLOSE_RADIUS))?;
    let area_fraction = bitmap.area_fraction();
    let component_count = component_count(&bitmap);
    if !(lo..=hi).contains(&area_fraction) || component_count != 1 || bitmap.touches_border() {
        return Err(Error::Generation(format!(
            "seed {seed}: closed mask has area {area_fraction:.4} and {component_count} components"
        )));
    }
    Ok(IrregularMask { bitmap, area_fraction, component_count, seed })
}

/// Tries `seed`, `seed + 1`, … up to `attempts` times; the returned mask records
/// the seed that succeeded.
pub fn gen_irregular_mask_retrying(h: usize, w: usize, seed: u64, area_range: (f64, f64), attempts: usize) -> Result<IrregularMask> {
    let mut last = None;
    for k in 0..attempts as u64 {
        match gen_irregular_mask(h, w, seed.wrapping_add(k), area_range) {
            Ok(m) => return Ok(m),
            Err(e @ Error::Generation(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::Generation("zero attempts requested".into())))
}
