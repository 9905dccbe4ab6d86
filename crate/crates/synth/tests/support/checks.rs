//! Independent per-seed invariant checks for synthesized forgeries. Shared
//! with the workspace acceptance suite.

#![allow(dead_code)]

use integscan_imaging::morph::{component_count, dilate, erode};
use integscan_imaging::resample::bilinear_at;
use integscan_imaging::{Image, Mask};
use integscan_synth::texture::pristine;
use integscan_synth::{
    feather_radius, gen_irregular_mask_retrying, synth_cstd, synth_edd, synth_idd, synth_removal, Modality, SynthConfig, Transform,
};

pub const SIZE: usize = 64;

pub type Check = Result<(), String>;

pub fn modality(seed: u64) -> Modality {
    Modality::ALL[seed as usize % 4]
}

pub fn image(seed: u64) -> Image {
    pristine(modality(seed), SIZE, SIZE, seed).unwrap()
}

pub fn local(pristine: &Image, forged: &Image, allowed: &Mask, what: &str) -> Check {
    let (c, h, w) = pristine.dims();
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                if !allowed.get(y, x) && pristine.get(ch, y, x).to_bits() != forged.get(ch, y, x).to_bits() {
                    return Err(format!("{what}: change at ({y},{x})"));
                }
            }
        }
    }
    Ok(())
}

pub fn region_hygiene(m: &Mask, what: &str) -> Check {
    if component_count(m) != 1 {
        return Err(format!("{what}: {} components", component_count(m)));
    }
    if !(0.02..=0.15).contains(&m.area_fraction()) {
        return Err(format!("{what}: area {}", m.area_fraction()));
    }
    if m.touches_border() {
        return Err(format!("{what}: border contact"));
    }
    Ok(())
}

fn center(m: &Mask) -> (i64, i64) {
    let (y0, x0, y1, x1) = m.bbox().unwrap();
    (((y0 + y1) / 2) as i64, ((x0 + x1) / 2) as i64)
}

/// Forward map of a source pixel under a right-angle transform.
fn forward_exact(q: (i64, i64), c: (i64, i64), t: &Transform) -> (i64, i64) {
    let k = (t.angle_deg.rem_euclid(360.0) / 90.0) as usize;
    let (cos, sin) = [(1, 0), (0, 1), (-1, 0), (0, -1)][k];
    let (qy, qx) = (q.0 - c.0, q.1 - c.1);
    (c.0 + t.dy + sin * qx + cos * qy, c.1 + t.dx + cos * qx - sin * qy)
}

/// Source coordinate of a target pixel via the general rotation-and-scale inverse.
fn inverse_real(p: (i64, i64), c: (i64, i64), t: &Transform) -> (f64, f64) {
    let th = t.angle_deg.to_radians();
    let (oy, ox) = ((p.0 - c.0 - t.dy) as f64, (p.1 - c.1 - t.dx) as f64);
    let qx = (th.cos() * ox + th.sin() * oy) / t.scale;
    let qy = (-th.sin() * ox + th.cos() * oy) / t.scale;
    (c.0 as f64 + qy, c.1 as f64 + qx)
}

/// Checks the alpha = 1 core of a pasted region against a recomputation from
/// the source image. Returns whether the exact (right-angle) path applied.
pub fn core(forged: &Image, src: &Image, src_mask: &Mask, target: &Mask, t: &Transform, what: &str) -> Result<bool, String> {
    let core = erode(target, feather_radius(t.feather_sigma));
    let c = center(src_mask);
    let (h, w) = target.dims();
    let exact = t.scale == 1.0 && t.angle_deg.rem_euclid(90.0) == 0.0;
    if exact {
        for y in 0..src.height() {
            for x in 0..src.width() {
                if !src_mask.get(y, x) {
                    continue;
                }
                let (ty, tx) = forward_exact((y as i64, x as i64), c, t);
                if ty < 0 || tx < 0 || ty >= h as i64 || tx >= w as i64 || !target.get(ty as usize, tx as usize) {
                    return Err(format!("{what}: exact image of source ({y},{x}) outside target"));
                }
                let (ty, tx) = (ty as usize, tx as usize);
                if core.get(ty, tx) {
                    for ch in 0..src.channels() {
                        if forged.get(ch, ty, tx).to_bits() != src.get(ch, y, x).to_bits() {
                            return Err(format!("{what}: core mismatch at ({ty},{tx})"));
                        }
                    }
                }
            }
        }
    } else {
        for y in 0..h {
            for x in 0..w {
                if !core.get(y, x) {
                    continue;
                }
                let (sy, sx) = inverse_real((y as i64, x as i64), c, t);
                for ch in 0..src.channels() {
                    let want = bilinear_at(src.plane(ch), src.height(), src.width(), sy, sx).ok_or(format!("{what}: core maps outside source"))?;
                    if (forged.get(ch, y, x) - want).abs() >= 1e-9 {
                        return Err(format!("{what}: bilinear core mismatch at ({y},{x})"));
                    }
                }
            }
        }
    }
    Ok(exact)
}

fn binary(m: &Mask, what: &str) -> Check {
    // Masks are stored as bits; the written 8-bit form must be exactly {0, 1}.
    if m.to_values().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(format!("{what}: non-binary mask"));
    }
    Ok(())
}

pub fn mask_seed(seed: u64) -> Check {
    let m = gen_irregular_mask_retrying(SIZE, SIZE, seed, (0.02, 0.15), 20).map_err(|e| e.to_string())?;
    if m.component_count != 1 || m.area_fraction != m.bitmap.area_fraction() {
        return Err("mask metadata disagrees with bitmap".into());
    }
    binary(&m.bitmap, "mask")?;
    region_hygiene(&m.bitmap, "mask")
}

/// Returns whether the sample took the exact right-angle path.
pub fn idd_seed(seed: u64, cfg: &SynthConfig) -> Result<bool, String> {
    let img = image(seed);
    let out = synth_idd(&img, seed, cfg).map_err(|e| e.to_string())?;
    local(&img, &out.forged, &dilate(&out.gt, feather_radius(cfg.feather_sigma)), "idd")?;
    binary(&out.gt, "idd")?;
    region_hygiene(&out.source, "idd source")?;
    region_hygiene(&out.target, "idd target")?;
    if out.gt != out.source.union(&out.target).unwrap() {
        return Err("idd: gt is not source ∪ target".into());
    }
    if component_count(&out.gt) != 2 {
        return Err(format!("idd: {} gt components", component_count(&out.gt)));
    }
    core(&out.forged, &img, &out.source, &out.target, &out.transform, "idd")
}

pub fn edd_seed(seed: u64, cfg: &SynthConfig) -> Result<bool, String> {
    let host = image(seed);
    let donor = pristine(modality(seed), SIZE, SIZE, seed + 7_000_000).unwrap();
    let out = synth_edd(&host, &donor, seed, cfg).map_err(|e| e.to_string())?;
    local(&host, &out.forged, &dilate(&out.gt, feather_radius(cfg.feather_sigma)), "edd")?;
    binary(&out.gt, "edd")?;
    region_hygiene(&out.gt, "edd target")?;
    if component_count(&out.donor_mask) != 1 {
        return Err("edd: donor mask is not one component".into());
    }
    core(&out.forged, &donor, &out.donor_mask, &out.gt, &out.transform, "edd")
}

fn gradient_magnitude(img: &Image) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    let l = img.luma().unwrap();
    (0..h * w)
        .map(|i| {
            let (y, x) = (i / w, i % w);
            let gx = l[y * w + (x + 1).min(w - 1)] - l[y * w + x.saturating_sub(1)];
            let gy = l[(y + 1).min(h - 1) * w + x] - l[y.saturating_sub(1) * w + x];
            (gx * gx + gy * gy).sqrt()
        })
        .collect()
}

/// Returns (gradient sum on seams, seam pixels, gradient sum elsewhere, other pixels).
pub fn cstd_seed(seed: u64, cfg: &SynthConfig) -> Result<(f64, usize, f64, usize), String> {
    let img = image(seed);
    let out = synth_cstd(&img, seed, cfg).map_err(|e| e.to_string())?;
    let band = Mask::from_fn(SIZE, SIZE, |y, x| out.band.contains(y, x)).unwrap();
    local(&img, &out.forged, &band, "cstd")?;
    binary(&out.gt, "cstd")?;
    if !out.gt.any() || component_count(&out.gt) != 2 {
        return Err(format!("cstd: {} seam components", component_count(&out.gt)));
    }
    let g = gradient_magnitude(&out.forged);
    let mut acc = (0.0, 0, 0.0, 0);
    for (i, &b) in out.gt.bits().iter().enumerate() {
        if b {
            acc.0 += g[i];
            acc.1 += 1;
        } else {
            acc.2 += g[i];
            acc.3 += 1;
        }
    }
    Ok(acc)
}

pub fn removal_seed(seed: u64, cfg: &SynthConfig) -> Check {
    let img = image(seed);
    let out = synth_removal(&img, seed, cfg).map_err(|e| e.to_string())?;
    local(&img, &out.forged, &out.gt, "removal")?;
    binary(&out.gt, "removal")?;
    region_hygiene(&out.gt, "removal")?;
    if !out.forged.data().iter().all(|v| (0.0..=1.0).contains(v)) {
        return Err("removal: value outside [0, 1]".into());
    }
    Ok(())
}
