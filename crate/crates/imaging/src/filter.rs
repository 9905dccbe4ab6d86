//! Separable linear filtering on single planes.

use crate::error::{Error, Result};
use crate::Image;

/// Normalized Gaussian taps with radius `ceil(3σ)`. σ = 0 gives the identity tap.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("gaussian sigma must be finite and >= 0, got {sigma}")));
    }
    gaussian_kernel_with_radius(sigma, (3.0 * sigma).ceil() as usize)
}

/// Normalized Gaussian taps over `[-radius, radius]`.
pub fn gaussian_kernel_with_radius(sigma: f64, radius: usize) -> Result<Vec<f64>> {
    if sigma == 0.0 || radius == 0 {
        return Ok(vec![1.0]);
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("gaussian sigma must be finite and >= 0, got {sigma}")));
    }
    let r = radius as isize;
    let taps: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|t| t / total).collect())
}

/// Correlates rows then columns with an odd-length kernel, replicating edge samples.
pub fn separable(plane: &[f64], height: usize, width: usize, kernel: &[f64]) -> Result<Vec<f64>> {
    if kernel.len() % 2 == 0 {
        return Err(Error::InvalidArgument("kernel length must be odd".into()));
    }
    if plane.len() != height * width {
        return Err(Error::Shape(format!("plane of {} samples for {height}x{width}", plane.len())));
    }
    if kernel.len() == 1 {
        return Ok(plane.iter().map(|v| v * kernel[0]).collect());
    }
    let r = (kernel.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &t) in kernel.iter().enumerate() {
                acc += t * row[clamp(x as isize + k as isize - r, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for (k, &t) in kernel.iter().enumerate() {
            let src = clamp(y as isize + k as isize - r, height);
            let (dst_row, src_row) = (&mut out[y * width..(y + 1) * width], &tmp[src * width..(src + 1) * width]);
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += t * s;
            }
        }
    }
    Ok(out)
}

pub fn gaussian_blur_plane(plane: &[f64], height: usize, width: usize, sigma: f64) -> Result<Vec<f64>> {
    separable(plane, height, width, &gaussian_kernel(sigma)?)
}

pub fn gaussian_blur(image: &Image, sigma: f64) -> Result<Image> {
    let kernel = gaussian_kernel(sigma)?;
    let (c, h, w) = image.dims();
    let planes = (0..c).map(|i| separable(image.plane(i), h, w, &kernel)).collect::<Result<Vec<_>>>()?;
    Image::from_planes(planes, h, w)
}

/// Mean over the (2r+1)² window with replicated edges.
pub fn box_mean(plane: &[f64], height: usize, width: usize, radius: usize) -> Result<Vec<f64>> {
    let n = 2 * radius + 1;
    separable(plane, height, width, &vec![1.0 / n as f64; n])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(1.5).unwrap();
        assert_eq!(k.len(), 11);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..k.len() {
            assert_eq!(k[i], k[k.len() - 1 - i]);
        }
        assert_eq!(gaussian_kernel(0.0).unwrap(), vec![1.0]);
        assert!(gaussian_kernel(-1.0).is_err());
    }

    #[test]
    fn blur_preserves_constants() {
        let p = vec![0.3; 7 * 5];
        for v in gaussian_blur_plane(&p, 7, 5, 2.0).unwrap() {
            assert!((v - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn blur_matches_direct_2d_sum() {
        let (h, w) = (6, 9);
        let p: Vec<f64> = (0..h * w).map(|i| ((i * 37) % 11) as f64).collect();
        let k = gaussian_kernel(0.8).unwrap();
        let r = (k.len() / 2) as isize;
        let out = separable(&p, h, w, &k).unwrap();
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let yy = (y + dy).clamp(0, h as isize - 1) as usize;
                        let xx = (x + dx).clamp(0, w as isize - 1) as usize;
                        acc += k[(dy + r) as usize] * k[(dx + r) as usize] * p[yy * w + xx];
                    }
                }
                assert!((acc - out[y as usize * w + x as usize]).abs() < 1e-12);
            }
        }
    }
}
