//! 8-bit PNG reading and writing.

use std::path::Path;

use ::image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::{Image, Mask};

fn codec_err(path: &Path) -> impl FnOnce(::image::ImageError) -> Error + '_ {
    move |source| match source {
        ::image::ImageError::IoError(e) => Error::Io { path: path.display().to_string(), source: e },
        source => Error::Codec { path: path.display().to_string(), source },
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Loads a PNG as a 1-channel (gray) or 3-channel (colour) image in [0, 1].
/// Alpha is discarded; 16-bit samples are scaled.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let dynamic = ::image::open(path).map_err(codec_err(path))?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let gray = matches!(
        dynamic,
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_)
    );
    if gray {
        let buf = dynamic.to_luma16();
        Image::new(1, h, w, buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect())
    } else {
        let buf = dynamic.to_rgb16();
        let planes = (0..3).map(|c| buf.pixels().map(|p| p.0[c] as f64 / 65535.0).collect()).collect();
        Image::from_planes(planes, h, w)
    }
}

/// Writes an 8-bit gray or RGB PNG, rounding each sample to the nearest level.
pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (c, h, w) = image.dims();
    let (wu, hu) = (w as u32, h as u32);
    match c {
        1 => {
            let buf: GrayImage = ImageBuffer::from_fn(wu, hu, |x, y| Luma([to_u8(image.get(0, y as usize, x as usize))]));
            buf.save(path).map_err(codec_err(path))
        }
        3 => {
            let buf: RgbImage = ImageBuffer::from_fn(wu, hu, |x, y| {
                let (y, x) = (y as usize, x as usize);
                Rgb([to_u8(image.get(0, y, x)), to_u8(image.get(1, y, x)), to_u8(image.get(2, y, x))])
            });
            buf.save(path).map_err(codec_err(path))
        }
        c => Err(Error::InvalidArgument(format!("PNG output needs 1 or 3 channels, got {c}"))),
    }
}

/// Loads a single-channel mask PNG whose samples are exactly 0 or 255.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let dynamic = ::image::open(path).map_err(codec_err(path))?;
    let DynamicImage::ImageLuma8(buf) = dynamic else {
        return Err(Error::InvalidArgument(format!("{}: mask must be 8-bit single-channel", path.display())));
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let bits = buf
        .pixels()
        .map(|p| match p.0[0] {
            0 => Ok(false),
            255 => Ok(true),
            v => Err(Error::InvalidArgument(format!("{}: mask value {v} is not 0 or 255", path.display()))),
        })
        .collect::<Result<Vec<_>>>()?;
    Mask::new(h, w, bits)
}

pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf: GrayImage = ImageBuffer::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Luma([if mask.get(y as usize, x as usize) { 255 } else { 0 }])
    });
    buf.save(path).map_err(codec_err(path))
}
