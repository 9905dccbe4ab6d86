use integscan_imaging::filter::gaussian_kernel_with_radius;
use integscan_imaging::Image;

use crate::error::{Error, Result};

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Separable correlation over valid positions only.
fn filter_valid(p: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = k.iter().enumerate().map(|(i, t)| t * p[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity with an 11×11 Gaussian window (σ = 1.5) over
/// valid positions, on luma for colour input, with dynamic range 1.
pub fn ssim(x: &Image, y: &Image) -> Result<f64> {
    if !x.same_shape(y) {
        return Err(Error::InvalidArgument(format!("SSIM inputs differ in shape: {:?} vs {:?}", x.dims(), y.dims())));
    }
    let (h, w) = (x.height(), x.width());
    if h < WINDOW || w < WINDOW {
        return Err(Error::InvalidArgument(format!("SSIM needs at least {WINDOW}x{WINDOW}, got {h}x{w}")));
    }
    let (a, b) = (x.luma()?, y.luma()?);
    let k = gaussian_kernel_with_radius(SIGMA, WINDOW / 2)?;
    let mu_a = filter_valid(&a, h, w, &k);
    let mu_b = filter_valid(&b, h, w, &k);
    let prod = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).collect::<Vec<_>>();
    let e_aa = filter_valid(&prod(&a, &a), h, w, &k);
    let e_bb = filter_valid(&prod(&b, &b), h, w, &k);
    let e_ab = filter_valid(&prod(&a, &b), h, w, &k);
    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let (va, vb, cov) = (e_aa[i] - ma * ma, e_bb[i] - mb * mb, e_ab[i] - ma * mb);
            ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2))
        })
        .sum();
    Ok(total / mu_a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_symmetry() {
        let x = Image::from_fn(3, 20, 24, |c, y, xx| ((c * 7 + y * 3 + xx * 5) % 13) as f64 / 12.0).unwrap();
        let y = x.map(|v| (v * 0.8 + 0.05).min(1.0));
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        assert!((ssim(&x, &y).unwrap() - ssim(&y, &x).unwrap()).abs() < 1e-12);
        assert!(ssim(&x, &y).unwrap() < 1.0);
    }

    #[test]
    fn small_or_mismatched_inputs() {
        let a = Image::filled(1, 10, 30, 0.5).unwrap();
        assert!(ssim(&a, &a).is_err());
        let b = Image::filled(1, 12, 12, 0.5).unwrap();
        let c = Image::filled(1, 12, 13, 0.5).unwrap();
        assert!(ssim(&b, &c).is_err());
    }
}
