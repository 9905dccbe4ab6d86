//! Resizing and point sampling.

use crate::error::{Error, Result};
use crate::{Image, Mask};

/// Bilinear sample at continuous pixel-center coordinates; `None` outside the image.
#[inline]
pub fn bilinear_at(plane: &[f64], height: usize, width: usize, y: f64, x: f64) -> Option<f64> {
    if !(y >= 0.0 && x >= 0.0 && y <= (height - 1) as f64 && x <= (width - 1) as f64) {
        return None;
    }
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(height - 1), (x0 + 1).min(width - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let top = plane[y0 * width + x0] * (1.0 - fx) + plane[y0 * width + x1] * fx;
    let bottom = plane[y1 * width + x0] * (1.0 - fx) + plane[y1 * width + x1] * fx;
    Some(top * (1.0 - fy) + bottom * fy)
}

fn source_coord(dst: usize, src_len: usize, dst_len: usize) -> f64 {
    let s = (dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5;
    s.clamp(0.0, (src_len - 1) as f64)
}

/// Half-pixel-centred bilinear resize of one plane.
pub fn resize_plane(plane: &[f64], height: usize, width: usize, new_h: usize, new_w: usize) -> Result<Vec<f64>> {
    if new_h == 0 || new_w == 0 {
        return Err(Error::InvalidArgument("resize target must be non-empty".into()));
    }
    if plane.len() != height * width {
        return Err(Error::Shape(format!("plane of {} samples for {height}x{width}", plane.len())));
    }
    let mut out = Vec::with_capacity(new_h * new_w);
    for y in 0..new_h {
        let sy = source_coord(y, height, new_h);
        for x in 0..new_w {
            let sx = source_coord(x, width, new_w);
            out.push(bilinear_at(plane, height, width, sy, sx).expect("clamped coordinate"));
        }
    }
    Ok(out)
}

pub fn resize(image: &Image, new_h: usize, new_w: usize) -> Result<Image> {
    let (c, h, w) = image.dims();
    let planes = (0..c).map(|i| resize_plane(image.plane(i), h, w, new_h, new_w)).collect::<Result<Vec<_>>>()?;
    Image::from_planes(planes, new_h, new_w)
}

/// Nearest-neighbour resize for masks.
pub fn resize_mask(mask: &Mask, new_h: usize, new_w: usize) -> Result<Mask> {
    let (h, w) = mask.dims();
    let pick = |d: usize, src: usize, dst: usize| (((d as f64 + 0.5) * src as f64 / dst as f64) as usize).min(src - 1);
    Mask::from_fn(new_h, new_w, |y, x| mask.get(pick(y, h, new_h), pick(x, w, new_w)))
}

/// Crops the inclusive-exclusive window `[y0, y0+h) × [x0, x0+w)`.
pub fn crop(image: &Image, y0: usize, x0: usize, h: usize, w: usize) -> Result<Image> {
    if y0 + h > image.height() || x0 + w > image.width() {
        return Err(Error::InvalidArgument("crop window exceeds image".into()));
    }
    Image::from_fn(image.channels(), h, w, |c, y, x| image.get(c, y0 + y, x0 + x))
}

pub fn crop_mask(mask: &Mask, y0: usize, x0: usize, h: usize, w: usize) -> Result<Mask> {
    if y0 + h > mask.height() || x0 + w > mask.width() {
        return Err(Error::InvalidArgument("crop window exceeds mask".into()));
    }
    Mask::from_fn(h, w, |y, x| mask.get(y0 + y, x0 + x))
}

/// Factor-2 downsampling by averaging 2×2 blocks (odd trailing row/column dropped).
pub fn halve_plane(plane: &[f64], height: usize, width: usize) -> (Vec<f64>, usize, usize) {
    let (h2, w2) = (height / 2, width / 2);
    let mut out = Vec::with_capacity(h2 * w2);
    for y in 0..h2 {
        for x in 0..w2 {
            let i = 2 * y * width + 2 * x;
            out.push(0.25 * (plane[i] + plane[i + 1] + plane[i + width] + plane[i + width + 1]));
        }
    }
    (out, h2, w2)
}
