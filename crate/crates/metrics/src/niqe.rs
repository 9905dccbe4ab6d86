//! Natural image quality evaluator: a multivariate Gaussian over patch-level
//! MSCN statistics, fit on pristine images and compared against a test image.

use std::cmp::Ordering;
use std::sync::OnceLock;

use integscan_imaging::filter::{gaussian_kernel_with_radius, separable};
use integscan_imaging::resample::halve_plane;
use integscan_imaging::Image;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub const PATCH_SIZE: usize = 96;
pub const SHARPNESS_KEEP: f64 = 0.75;
pub const SCALES: usize = 2;
pub const FEATURES_PER_SCALE: usize = 18;
pub const FEATURES: usize = FEATURES_PER_SCALE * SCALES;
pub const LAMBDA: f64 = 1e-6;
pub const MIN_FIT_IMAGES: usize = 20;

const ALPHA_MIN: f64 = 0.2;
const ALPHA_STEP: f64 = 0.001;
const ALPHA_STEPS: usize = 9801;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NiqeModel {
    pub mean: Vec<f64>,
    /// Row-major `FEATURES × FEATURES`, already regularized by `LAMBDA·I`.
    pub cov: Vec<f64>,
    pub patch_size: usize,
    pub sharpness_keep: f64,
    pub scales: usize,
}

struct AlphaGrid {
    alpha: Vec<f64>,
    /// Γ(2/α)² / (Γ(1/α) Γ(3/α)), decreasing in α.
    ratio: Vec<f64>,
}

fn grid() -> &'static AlphaGrid {
    static GRID: OnceLock<AlphaGrid> = OnceLock::new();
    GRID.get_or_init(|| {
        let alpha: Vec<f64> = (0..ALPHA_STEPS).map(|i| ALPHA_MIN + i as f64 * ALPHA_STEP).collect();
        let ratio = alpha
            .iter()
            .map(|&a| {
                let g2 = libm::tgamma(2.0 / a);
                g2 * g2 / (libm::tgamma(1.0 / a) * libm::tgamma(3.0 / a))
            })
            .collect();
        AlphaGrid { alpha, ratio }
    })
}

fn nearest_alpha(target: f64) -> f64 {
    let g = grid();
    let mut best = 0;
    let mut err = f64::INFINITY;
    for (i, r) in g.ratio.iter().enumerate() {
        let e = (r - target).abs();
        if e < err {
            err = e;
            best = i;
        }
    }
    g.alpha[best]
}

/// Moment-matching GGD fit; returns (shape α, variance σ²).
pub fn ggd_fit(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sigma2 = x.iter().map(|v| v * v).sum::<f64>() / n;
    let e_abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    if sigma2 <= 0.0 {
        return (ALPHA_MIN, 0.0);
    }
    (nearest_alpha(e_abs * e_abs / sigma2), sigma2)
}

/// Moment-matching AGGD fit; returns (α, η, σl², σr²).
pub fn aggd_fit(x: &[f64]) -> (f64, f64, f64, f64) {
    let (mut ls, mut ln, mut rs, mut rn) = (0.0, 0usize, 0.0, 0usize);
    for &v in x {
        if v < 0.0 {
            ls += v * v;
            ln += 1;
        } else if v > 0.0 {
            rs += v * v;
            rn += 1;
        }
    }
    let left2 = if ln > 0 { ls / ln as f64 } else { 0.0 };
    let right2 = if rn > 0 { rs / rn as f64 } else { 0.0 };
    let n = x.len() as f64;
    let e2 = x.iter().map(|v| v * v).sum::<f64>() / n;
    let e_abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    if e2 <= 0.0 || left2 <= 0.0 || right2 <= 0.0 {
        return (ALPHA_MIN, 0.0, left2, right2);
    }
    let (l, r) = (left2.sqrt(), right2.sqrt());
    let gamma = l / r;
    let rhat = e_abs * e_abs / e2;
    let big_r = rhat * (gamma.powi(3) + 1.0) * (gamma + 1.0) / (gamma * gamma + 1.0).powi(2);
    let alpha = nearest_alpha(big_r);
    let (g1, g2, g3) = (libm::tgamma(1.0 / alpha), libm::tgamma(2.0 / alpha), libm::tgamma(3.0 / alpha));
    let eta = (r - l) * (g2 / g1) * (g1 / g3).sqrt();
    (alpha, eta, left2, right2)
}

/// MSCN coefficients and the local deviation map of a plane on a 0..255 scale.
pub fn mscn(plane: &[f64], h: usize, w: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = gaussian_kernel_with_radius(7.0 / 6.0, 3)?;
    let mu = separable(plane, h, w, &k)?;
    let sq: Vec<f64> = plane.iter().map(|v| v * v).collect();
    let mu2 = separable(&sq, h, w, &k)?;
    let sigma: Vec<f64> = mu.iter().zip(&mu2).map(|(m, m2)| (m2 - m * m).abs().sqrt()).collect();
    let out = plane.iter().zip(&mu).zip(&sigma).map(|((v, m), s)| (v - m) / (s + 1.0)).collect();
    Ok((out, sigma))
}

fn patch_features(m: &[f64], w: usize, y0: usize, x0: usize, p: usize, out: &mut Vec<f64>) {
    let at = |y: usize, x: usize| m[(y0 + y) * w + x0 + x];
    let mut centre = Vec::with_capacity(p * p);
    for y in 0..p {
        for x in 0..p {
            centre.push(at(y, x));
        }
    }
    let (a, s2) = ggd_fit(&centre);
    out.extend([a, s2]);
    let shifts: [(usize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];
    for (dy, dx) in shifts {
        let mut prod = Vec::with_capacity(p * p);
        for y in 0..p - dy {
            for x in 0..p {
                let xx = x as isize + dx;
                if xx < 0 || xx >= p as isize {
                    continue;
                }
                prod.push(at(y, x) * at(y + dy, xx as usize));
            }
        }
        let (a, eta, l, r) = aggd_fit(&prod);
        out.extend([a, eta, l, r]);
    }
}

/// Per-patch 36-dim features with the patch sharpness (mean local deviation at full scale).
fn image_patches(image: &Image) -> Result<Vec<(f64, Vec<f64>)>> {
    let (h, w) = (image.height(), image.width());
    if h < PATCH_SIZE || w < PATCH_SIZE {
        return Err(Error::InvalidArgument(format!("NIQE needs at least {PATCH_SIZE}x{PATCH_SIZE}, got {h}x{w}")));
    }
    let luma: Vec<f64> = image.luma()?.iter().map(|v| v * 255.0).collect();
    let (m1, sigma) = mscn(&luma, h, w)?;
    let (half, hh, hw) = halve_plane(&luma, h, w);
    let (m2, _) = mscn(&half, hh, hw)?;
    let (py, px) = (h / PATCH_SIZE, w / PATCH_SIZE);
    let q = PATCH_SIZE / 2;
    let mut patches = Vec::with_capacity(py * px);
    for by in 0..py {
        for bx in 0..px {
            let (y0, x0) = (by * PATCH_SIZE, bx * PATCH_SIZE);
            let mut sharp = 0.0;
            for y in y0..y0 + PATCH_SIZE {
                sharp += sigma[y * w + x0..y * w + x0 + PATCH_SIZE].iter().sum::<f64>();
            }
            sharp /= (PATCH_SIZE * PATCH_SIZE) as f64;
            let mut f = Vec::with_capacity(FEATURES);
            patch_features(&m1, w, y0, x0, PATCH_SIZE, &mut f);
            patch_features(&m2, hw, by * q, bx * q, q, &mut f);
            patches.push((sharp, f));
        }
    }
    Ok(patches)
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Fit the pristine model; the result does not depend on the order of `images`.
pub fn niqe_fit(images: &[Image]) -> Result<NiqeModel> {
    if images.len() < MIN_FIT_IMAGES {
        return Err(Error::Fit(format!("need at least {MIN_FIT_IMAGES} images, got {}", images.len())));
    }
    let mut rows = Vec::new();
    for img in images {
        let mut patches = image_patches(img)?;
        patches.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| lex(&a.1, &b.1)));
        let keep = ((patches.len() as f64) * SHARPNESS_KEEP).ceil() as usize;
        rows.extend(patches.into_iter().take(keep.max(1)).map(|p| p.1));
    }
    if rows.len() < 2 {
        return Err(Error::Fit(format!("only {} usable patches", rows.len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite patch feature".into()));
    }
    // Accumulate in a canonical order so the fit is a function of the image set.
    rows.sort_by(|a, b| lex(a, b));
    let (mean, mut cov) = linalg::mean_cov(&rows, FEATURES);
    for i in 0..FEATURES {
        cov[i * FEATURES + i] += LAMBDA;
    }
    Ok(NiqeModel { mean, cov, patch_size: PATCH_SIZE, sharpness_keep: SHARPNESS_KEEP, scales: SCALES })
}

/// Distance of an image's feature distribution from the pristine model; lower is more natural.
pub fn niqe_score(image: &Image, model: &NiqeModel) -> Result<f64> {
    if model.mean.len() != FEATURES || model.cov.len() != FEATURES * FEATURES {
        return Err(Error::InvalidArgument("NIQE model has the wrong feature dimension".into()));
    }
    let rows: Vec<Vec<f64>> = image_patches(image)?.into_iter().map(|p| p.1).collect();
    let (nu, cov_img) = linalg::mean_cov(&rows, FEATURES);
    let pooled: Vec<f64> = model.cov.iter().zip(&cov_img).map(|(a, b)| (a + b) / 2.0).collect();
    let d: Vec<f64> = nu.iter().zip(&model.mean).map(|(a, b)| a - b).collect();
    linalg::mahalanobis(&pooled, FEATURES, &d, LAMBDA)
}
