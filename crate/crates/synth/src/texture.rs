//! Seeded procedural stand-ins for pristine figures of each modality.
//!
//! Fluorescence micrographs and tissue photographs are colour; blots and
//! flow-cytometry scatter plots are gray. Every output is quantized to 8 bits
//! so it equals what a PNG round trip would give back.

use integscan_imaging::filter::gaussian_blur_plane;
use integscan_imaging::Image;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;
use crate::Modality;

/// Channel count of the pristine images generated for `modality`.
pub fn channels(modality: Modality) -> usize {
    match modality {
        Modality::Microscopy | Modality::Macroscopy => 3,
        Modality::Blot | Modality::Facs => 1,
    }
}

/// Zero-mean, unit-variance sum of blurred white noise at several scales.
fn smooth_field(rng: &mut ChaCha8Rng, h: usize, w: usize, sigmas: &[(f64, f64)]) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; h * w];
    for &(sigma, weight) in sigmas {
        let noise: Vec<f64> = (0..h * w).map(|_| rng.sample(StandardNormal)).collect();
        let mut f = gaussian_blur_plane(&noise, h, w, sigma)?;
        normalize(&mut f);
        for (a, v) in acc.iter_mut().zip(f) {
            *a += weight * v;
        }
    }
    normalize(&mut acc);
    Ok(acc)
}

fn normalize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt().max(1e-12);
    for x in v {
        *x = (*x - mean) / sd;
    }
}

fn add_grain(img: &mut Image, rng: &mut ChaCha8Rng, sigma: f64) {
    let n = Normal::new(0.0, sigma).expect("positive sigma");
    for v in img.data_mut() {
        *v += n.sample(rng);
    }
}

fn microscopy(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Result<Image> {
    let scale = h.min(w) as f64 / 64.0;
    let bg = smooth_field(rng, h, w, &[(h.min(w) as f64 / 4.0, 1.0)])?;
    let mut img = Image::from_fn(3, h, w, |c, y, x| 0.05 + 0.015 * bg[y * w + x] + [0.0, 0.01, 0.02][c])?;
    let cell_tex = smooth_field(rng, h, w, &[(1.0, 1.0), (2.5, 0.7)])?;
    let cells = rng.random_range(8..16) * (h * w) / 4096;
    for _ in 0..cells.max(3) {
        let (cy, cx) = (rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64));
        let r = rng.random_range(3.0..8.0) * scale;
        let (ry, rx) = (r * rng.random_range(0.7..1.3), r * rng.random_range(0.7..1.3));
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let color = match rng.random_range(0..4) {
            0 => [0.15, 0.85, 0.2],
            1 => [0.9, 0.2, 0.15],
            2 => [0.2, 0.35, 0.95],
            _ => [0.8, 0.75, 0.2],
        };
        let gain = rng.random_range(0.5..1.0);
        let (s, c) = theta.sin_cos();
        let reach = (ry.max(rx) * 1.8) as isize + 1;
        for y in (cy as isize - reach).max(0)..(cy as isize + reach).min(h as isize) {
            for x in (cx as isize - reach).max(0)..(cx as isize + reach).min(w as isize) {
                let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                let (u, v) = ((c * dx + s * dy) / rx, (-s * dx + c * dy) / ry);
                let d2 = u * u + v * v;
                let body = (-d2 * d2).exp();
                let nucleus = 0.6 * (-6.0 * d2).exp();
                let i = y as usize * w + x as usize;
                let level = gain * (body + nucleus) * (1.0 + 0.35 * cell_tex[i]);
                for (ch, col) in color.iter().enumerate() {
                    let p = img.get(ch, y as usize, x as usize);
                    img.set(ch, y as usize, x as usize, p + level * col);
                }
            }
        }
    }
    add_grain(&mut img, rng, 0.015);
    Ok(img)
}

fn blot(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Result<Image> {
    let illum = smooth_field(rng, h, w, &[(h.min(w) as f64 / 3.0, 1.0)])?;
    let grain = smooth_field(rng, h, w, &[(0.8, 1.0)])?;
    let mut plane: Vec<f64> = (0..h * w).map(|i| 0.86 + 0.03 * illum[i] + 0.01 * grain[i]).collect();
    let lanes = rng.random_range(4..9usize);
    let pitch = w as f64 / lanes as f64;
    let half_width = pitch * rng.random_range(0.3..0.42);
    for lane in 0..lanes {
        let lx = (lane as f64 + 0.5) * pitch + rng.random_range(-0.05..0.05) * pitch;
        let bands = rng.random_range(2..6);
        for _ in 0..bands {
            let by = rng.random_range(0.08..0.92) * h as f64;
            let sy = rng.random_range(1.0..2.5) * h as f64 / 64.0;
            let dark = rng.random_range(0.25..0.75);
            let smile = rng.random_range(-0.8..0.8) * h as f64 / 64.0;
            for y in 0..h {
                for x in 0..w {
                    let u = (x as f64 - lx) / half_width;
                    if u.abs() > 1.3 {
                        continue;
                    }
                    let across = 1.0 / (1.0 + (4.0 * (u.abs() - 1.0)).exp());
                    let yc = by + smile * u * u;
                    let along = (-((y as f64 - yc) / sy).powi(2) / 2.0).exp();
                    plane[y * w + x] -= dark * across * along;
                }
            }
        }
    }
    let mut img = Image::new(1, h, w, plane)?;
    add_grain(&mut img, rng, 0.012);
    Ok(img)
}

fn macroscopy(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Result<Image> {
    let m = h.min(w) as f64;
    let tissue = smooth_field(rng, h, w, &[(m / 6.0, 1.0), (m / 20.0, 0.5)])?;
    let fibres = smooth_field(rng, h, w, &[(1.2, 1.0), (0.6, 0.4)])?;
    let pink = [0.88, 0.58, 0.64];
    let purple = [0.52, 0.3, 0.58];
    let pale = [0.95, 0.9, 0.92];
    let mut img = Image::from_fn(3, h, w, |c, y, x| {
        let i = y * w + x;
        let t = 1.0 / (1.0 + (-1.8 * tissue[i]).exp());
        let base = pink[c] * (1.0 - t) + purple[c] * t;
        let lumen = 1.0 / (1.0 + (-(tissue[i] - 1.6) * 6.0).exp());
        base * (1.0 - lumen) + pale[c] * lumen + 0.05 * fibres[i]
    })?;
    add_grain(&mut img, rng, 0.015);
    Ok(img)
}

fn facs(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Result<Image> {
    let mut plane = vec![0.97f64; h * w];
    let clusters = rng.random_range(2..4);
    let dots = h * w / 5;
    let centres: Vec<(f64, f64, f64, f64, f64)> = (0..clusters)
        .map(|_| {
            (
                rng.random_range(0.2..0.8) * h as f64,
                rng.random_range(0.2..0.8) * w as f64,
                rng.random_range(0.05..0.16) * h as f64,
                rng.random_range(0.05..0.16) * w as f64,
                rng.random_range(-0.7..0.7),
            )
        })
        .collect();
    for _ in 0..dots {
        let (cy, cx, sy, sx, rho) = centres[rng.random_range(0..clusters)];
        let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        let y = cy + sy * a;
        let x = cx + sx * (rho * a + (1.0 - rho * rho).sqrt() * b);
        if y >= 0.0 && x >= 0.0 && (y as usize) < h && (x as usize) < w {
            let i = y as usize * w + x as usize;
            plane[i] = (plane[i] - 0.22).max(0.0);
        }
    }
    // Axes along the left and bottom edges.
    let (ax, ay) = ((w / 12).max(2), h - (h / 12).max(2) - 1);
    for y in 0..h {
        plane[y * w + ax] = 0.1;
    }
    for x in 0..w {
        plane[ay * w + x] = 0.1;
    }
    let mut img = Image::new(1, h, w, plane)?;
    add_grain(&mut img, rng, 0.006);
    Ok(img)
}

/// Pristine figure for `modality`, deterministic in `seed`.
pub fn pristine(modality: Modality, h: usize, w: usize, seed: u64) -> Result<Image> {
    if h < 32 || w < 32 {
        return Err(Error::InvalidArgument(format!("textures need at least 32x32, got {h}x{w}")));
    }
    let mut rng = rng::stream(seed, rng::TEXTURE);
    let img = match modality {
        Modality::Microscopy => microscopy(&mut rng, h, w)?,
        Modality::Blot => blot(&mut rng, h, w)?,
        Modality::Macroscopy => macroscopy(&mut rng, h, w)?,
        Modality::Facs => facs(&mut rng, h, w)?,
    };
    Ok(img.clamp01().quantize_u8())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textures_are_deterministic_quantized_and_varied() {
        for &m in Modality::ALL {
            let a = pristine(m, 64, 48, 3).unwrap();
            assert_eq!(a.dims(), (channels(m), 64, 48));
            assert_eq!(a, pristine(m, 64, 48, 3).unwrap());
            assert_ne!(a, pristine(m, 64, 48, 4).unwrap());
            assert_eq!(a.quantize_u8(), a);
            let mean = a.data().iter().sum::<f64>() / a.data().len() as f64;
            let var = a.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / a.data().len() as f64;
            assert!(var > 1e-4, "{m}: flat texture");
        }
    }
}
