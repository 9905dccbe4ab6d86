//! Rotated/scaled region copies with feathered compositing (internal and
//! external duplication).

use integscan_imaging::filter::gaussian_blur_plane;
use integscan_imaging::morph::{component_count, dilate, erode};
use integscan_imaging::resample::bilinear_at;
use integscan_imaging::{Image, Mask};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::SynthConfig;
use crate::error::{Error, Result};
use crate::irregular::gen_irregular_mask_retrying;
use crate::rng;

/// Rigid-plus-scale map from a source region to its pasted copy.
///
/// A source pixel `q` lands at `c + (dy, dx) + s·R(θ)(q - c)`, where `c` is the
/// integer centre of the source region's bounding box and `R(θ)` rotates in
/// image coordinates (x right, y down).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub angle_deg: f64,
    pub scale: f64,
    pub dx: i64,
    pub dy: i64,
    pub feather_sigma: f64,
}

impl Transform {
    pub fn identity(feather_sigma: f64) -> Self {
        Transform { angle_deg: 0.0, scale: 1.0, dx: 0, dy: 0, feather_sigma }
    }

    /// Quarter turns when the map is a pure right-angle rotation at unit scale.
    pub fn quarter_turns(&self) -> Option<u8> {
        (self.scale == 1.0 && self.angle_deg.rem_euclid(90.0) == 0.0).then(|| (self.angle_deg.rem_euclid(360.0) / 90.0) as u8)
    }

    /// Source offset (dy, dx) for a target offset, both relative to their centres.
    fn inverse_offset(&self, oy: i64, ox: i64) -> Offset {
        match self.quarter_turns() {
            Some(k) => {
                let (c, s) = [(1, 0), (0, 1), (-1, 0), (0, -1)][k as usize];
                Offset::Exact(-s * ox + c * oy, c * ox + s * oy)
            }
            None => {
                let (s, c) = self.angle_deg.to_radians().sin_cos();
                let (x, y) = (ox as f64, oy as f64);
                Offset::Real((-s * x + c * y) / self.scale, (c * x + s * y) / self.scale)
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Offset {
    Exact(i64, i64),
    Real(f64, f64),
}

fn center(mask: &Mask) -> Result<(i64, i64)> {
    let (y0, x0, y1, x1) = mask.bbox().ok_or_else(|| Error::InvalidArgument("source mask is empty".into()))?;
    Ok((((y0 + y1) / 2) as i64, ((x0 + x1) / 2) as i64))
}

/// Nearest source pixel of a source offset, if inside the source frame.
fn nearest(c: (i64, i64), off: Offset, h: usize, w: usize) -> Option<(usize, usize)> {
    let (y, x) = match off {
        Offset::Exact(y, x) => (c.0 + y, c.1 + x),
        Offset::Real(y, x) => ((c.0 as f64 + y).round() as i64, (c.1 as f64 + x).round() as i64),
    };
    (y >= 0 && x >= 0 && y < h as i64 && x < w as i64).then_some((y as usize, x as usize))
}

/// Target offsets (relative to the target centre) covered by the transformed source mask.
fn target_offsets(source: &Mask, c: (i64, i64), t: &Transform) -> Vec<(i64, i64)> {
    let (h, w) = source.dims();
    let (y0, x0, y1, x1) = source.bbox().expect("non-empty source");
    let reach = [(y0, x0), (y0, x1), (y1, x0), (y1, x1)]
        .iter()
        .map(|&(y, x)| ((y as i64 - c.0) as f64).hypot((x as i64 - c.1) as f64))
        .fold(0.0, f64::max);
    let r = (reach * t.scale).ceil() as i64 + 2;
    let mut out = Vec::new();
    for oy in -r..=r {
        for ox in -r..=r {
            if let Some((y, x)) = nearest(c, t.inverse_offset(oy, ox), h, w) {
                if source.get(y, x) {
                    out.push((oy, ox));
                }
            }
        }
    }
    out
}

fn offsets_to_mask(offsets: &[(i64, i64)], center: (i64, i64), h: usize, w: usize) -> Result<Mask> {
    let mut m = Mask::empty(h, w)?;
    for &(oy, ox) in offsets {
        let (y, x) = (center.0 + oy, center.1 + ox);
        if y >= 0 && x >= 0 && y < h as i64 && x < w as i64 {
            m.set(y as usize, x as usize, true);
        }
    }
    Ok(m)
}

/// Feather radius `ceil(3σ)`.
pub fn feather_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil() as usize
}

/// Gaussian-blurred mask, forced to exactly 1 on the mask eroded by the feather
/// radius and exactly 0 outside its dilation. σ = 0 gives a hard mask.
pub fn feather_alpha(mask: &Mask, sigma: f64) -> Result<Vec<f64>> {
    let (h, w) = mask.dims();
    let r = feather_radius(sigma);
    let blurred = gaussian_blur_plane(&mask.to_values(), h, w, sigma)?;
    let (core, support) = (erode(mask, r), dilate(mask, r));
    Ok((0..h * w)
        .map(|i| if core.bits()[i] { 1.0 } else if !support.bits()[i] { 0.0 } else { blurred[i].clamp(0.0, 1.0) })
        .collect())
}

/// Pastes the transformed `src_mask` region of `src` into a copy of `dst`.
///
/// Right-angle, unit-scale maps sample by nearest neighbour (bit-exact copies);
/// everything else samples bilinearly. Returns the composite and the pasted
/// region in `dst` coordinates.
pub fn composite_transformed(dst: &Image, src: &Image, src_mask: &Mask, t: &Transform) -> Result<(Image, Mask)> {
    if src.channels() != dst.channels() {
        return Err(Error::InvalidArgument(format!("channel mismatch: {} vs {}", src.channels(), dst.channels())));
    }
    if src_mask.dims() != (src.height(), src.width()) {
        return Err(Error::InvalidArgument("source mask does not match the source image".into()));
    }
    if !(t.scale > 0.0 && t.scale.is_finite() && t.angle_deg.is_finite()) {
        return Err(Error::InvalidArgument(format!("degenerate transform {t:?}")));
    }
    let c = center(src_mask)?;
    let (h, w) = (dst.height(), dst.width());
    let tc = (c.0 + t.dy, c.1 + t.dx);
    let target = offsets_to_mask(&target_offsets(src_mask, c, t), tc, h, w)?;
    let alpha = feather_alpha(&target, t.feather_sigma)?;
    let (sh, sw) = (src.height(), src.width());
    let mut out = dst.clone();
    for y in 0..h {
        for x in 0..w {
            let a = alpha[y * w + x];
            if a == 0.0 {
                continue;
            }
            let off = t.inverse_offset(y as i64 - tc.0, x as i64 - tc.1);
            for ch in 0..dst.channels() {
                let v = match off {
                    Offset::Exact(oy, ox) => {
                        let sy = (c.0 + oy).clamp(0, sh as i64 - 1) as usize;
                        let sx = (c.1 + ox).clamp(0, sw as i64 - 1) as usize;
                        src.get(ch, sy, sx)
                    }
                    Offset::Real(oy, ox) => {
                        let sy = (c.0 as f64 + oy).clamp(0.0, (sh - 1) as f64);
                        let sx = (c.1 as f64 + ox).clamp(0.0, (sw - 1) as f64);
                        bilinear_at(src.plane(ch), sh, sw, sy, sx).expect("clamped")
                    }
                };
                let blended = if a == 1.0 { v } else { a * v + (1.0 - a) * dst.get(ch, y, x) };
                out.set(ch, y, x, blended);
            }
        }
    }
    Ok((out, target))
}

fn sample_rotation_scale(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> (f64, f64) {
    let quarter = rng.random_range(0..4u32) as f64 * 90.0;
    if rng.random_bool(cfg.right_angle_probability) {
        return (quarter, 1.0);
    }
    let jitter = rng.random_range(-cfg.jitter_deg..=cfg.jitter_deg);
    let scale = rng.random_range(cfg.scale_range.0..=cfg.scale_range.1);
    (quarter + jitter, scale)
}

const SOURCE_ATTEMPTS: u64 = 8;
const MASK_RETRIES: usize = 20;

/// Finds a transform whose pasted region fits in an `h×w` frame, lies in the
/// area range, is one component, avoids `forbidden` and touches no border.
fn place(
    source: &Mask,
    h: usize,
    w: usize,
    forbidden: Option<&Mask>,
    cfg: &SynthConfig,
    trng: &mut ChaCha8Rng,
    prng: &mut ChaCha8Rng,
) -> Result<Option<Transform>> {
    let c = center(source)?;
    let (angle, scale0) = sample_rotation_scale(trng, cfg);
    let (lo, hi) = cfg.area_range;
    let mut scale = scale0;
    for _ in 0..=cfg.shrink_steps {
        let mut t = Transform { angle_deg: angle, scale, dx: 0, dy: 0, feather_sigma: cfg.feather_sigma };
        let offsets = target_offsets(source, c, &t);
        let area = offsets.len() as f64 / (h * w) as f64;
        if area < lo {
            return Ok(None);
        }
        let oy = offsets.iter().map(|o| o.0);
        let ox = offsets.iter().map(|o| o.1);
        let (oy0, oy1) = (oy.clone().min().unwrap(), oy.max().unwrap());
        let (ox0, ox1) = (ox.clone().min().unwrap(), ox.max().unwrap());
        // Centres keeping the copy at least one pixel off every border.
        let (ty0, ty1) = (1 - oy0, h as i64 - 2 - oy1);
        let (tx0, tx1) = (1 - ox0, w as i64 - 2 - ox1);
        if area <= hi && ty0 <= ty1 && tx0 <= tx1 {
            let probe = offsets_to_mask(&offsets, (ty0, tx0), h, w)?;
            if component_count(&probe) != 1 {
                return Ok(None);
            }
            for _ in 0..cfg.placement_tries {
                let tc = (prng.random_range(ty0..=ty1), prng.random_range(tx0..=tx1));
                let clear = match forbidden {
                    None => true,
                    Some(f) => !offsets_to_mask(&offsets, tc, h, w)?.overlaps(f)?,
                };
                if clear {
                    t.dy = tc.0 - c.0;
                    t.dx = tc.1 - c.1;
                    return Ok(Some(t));
                }
            }
        }
        scale *= 0.9;
    }
    Ok(None)
}

fn check_min_size(img: &Image, what: &str) -> Result<()> {
    if img.height() < 32 || img.width() < 32 {
        return Err(Error::InvalidArgument(format!("{what} must be at least 32x32, got {}x{}", img.height(), img.width())));
    }
    Ok(())
}

/// Internal duplication result.
#[derive(Clone, Debug)]
pub struct DuplicationOutput {
    pub forged: Image,
    /// Source ∪ target.
    pub gt: Mask,
    pub source: Mask,
    pub target: Mask,
    pub transform: Transform,
    pub mask_seed: u64,
}

/// Copies an irregular region of `image` to another, non-touching place in the
/// same image.
pub fn synth_idd(image: &Image, seed: u64, cfg: &SynthConfig) -> Result<DuplicationOutput> {
    cfg.validate()?;
    check_min_size(image, "image")?;
    let (h, w) = (image.height(), image.width());
    let mut trng = rng::stream(seed, rng::TRANSFORM);
    let mut prng = rng::stream(seed, rng::PLACEMENT);
    for attempt in 0..SOURCE_ATTEMPTS {
        let mask_seed = seed.wrapping_mul(SOURCE_ATTEMPTS).wrapping_add(attempt * MASK_RETRIES as u64);
        let src = gen_irregular_mask_retrying(h, w, mask_seed, cfg.duplication_source_range(), MASK_RETRIES)?;
        let forbidden = dilate(&src.bitmap, 1);
        if let Some(t) = place(&src.bitmap, h, w, Some(&forbidden), cfg, &mut trng, &mut prng)? {
            let (forged, target) = composite_transformed(image, image, &src.bitmap, &t)?;
            return Ok(DuplicationOutput {
                forged,
                gt: src.bitmap.union(&target)?,
                source: src.bitmap,
                target,
                transform: t,
                mask_seed: src.seed,
            });
        }
    }
    Err(Error::Generation(format!("seed {seed}: no admissible duplication placement")))
}

/// External duplication result.
#[derive(Clone, Debug)]
pub struct EddOutput {
    pub forged: Image,
    /// Pasted region in the host.
    pub gt: Mask,
    /// Region taken from the donor, in donor coordinates.
    pub donor_mask: Mask,
    pub transform: Transform,
    pub mask_seed: u64,
}

/// Blends an irregular region of `donor` into `host`. A gray donor is
/// replicated to match a colour host and a colour donor is reduced to luma for
/// a gray host.
pub fn synth_edd(host: &Image, donor: &Image, seed: u64, cfg: &SynthConfig) -> Result<EddOutput> {
    cfg.validate()?;
    check_min_size(host, "host")?;
    check_min_size(donor, "donor")?;
    if host == donor {
        return Err(Error::InvalidArgument("donor and host are the same image".into()));
    }
    let donor = match (donor.channels(), host.channels()) {
        (a, b) if a == b => donor.clone(),
        (1, n) => donor.expand_channels(n)?,
        (3, 1) => Image::new(1, donor.height(), donor.width(), donor.luma()?)?,
        (a, b) => return Err(Error::InvalidArgument(format!("cannot blend a {a}-channel donor into a {b}-channel host"))),
    };
    let (h, w) = (host.height(), host.width());
    let mut trng = rng::stream(seed, rng::TRANSFORM);
    let mut prng = rng::stream(seed, rng::PLACEMENT);
    // Keep the pasted area in range relative to the host frame.
    let ratio = (h * w) as f64 / (donor.height() * donor.width()) as f64;
    let (a, b) = cfg.duplication_source_range();
    let range = ((a * ratio).min(0.5), (b * ratio).min(0.6));
    for attempt in 0..SOURCE_ATTEMPTS {
        let mask_seed = seed.wrapping_mul(SOURCE_ATTEMPTS).wrapping_add(attempt * MASK_RETRIES as u64);
        let src = gen_irregular_mask_retrying(donor.height(), donor.width(), mask_seed, range, MASK_RETRIES)?;
        if let Some(t) = place(&src.bitmap, h, w, None, cfg, &mut trng, &mut prng)? {
            let (forged, gt) = composite_transformed(host, &donor, &src.bitmap, &t)?;
            return Ok(EddOutput { forged, gt, donor_mask: src.bitmap, transform: t, mask_seed: src.seed });
        }
    }
    Err(Error::Generation(format!("seed {seed}: no admissible external placement")))
}
