use crate::error::{Error, Result};
use crate::LUMA_601;

/// Planar (channel-major) image with f64 samples, nominally in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!("image extents must be positive, got {channels}x{height}x{width}")));
        }
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "{} samples for a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        Ok(Image { channels, height, width, data })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Result<Self> {
        Image::new(channels, height, width, vec![value; channels * height * width])
    }

    pub fn from_fn(channels: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Image::new(channels, height, width, data)
    }

    /// Stacks equally sized single planes into one image.
    pub fn from_planes(planes: Vec<Vec<f64>>, height: usize, width: usize) -> Result<Self> {
        let channels = planes.len();
        if planes.iter().any(|p| p.len() != height * width) {
            return Err(Error::Shape("plane length does not match height*width".into()));
        }
        Image::new(channels, height, width, planes.concat())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.dims() == other.dims()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image { data: self.data.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    /// Applies `f` to each plane independently.
    pub fn map_planes(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Image {
        let data = (0..self.channels).flat_map(|c| f(self.plane(c))).collect();
        Image { data, ..self.clone() }
    }

    pub fn clamp01(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Single-plane luminance; RGB uses Rec.601 weights, gray is returned as is.
    pub fn luma(&self) -> Result<Vec<f64>> {
        match self.channels {
            1 => Ok(self.data.clone()),
            3 => {
                let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
                Ok((0..r.len()).map(|i| LUMA_601[0] * r[i] + LUMA_601[1] * g[i] + LUMA_601[2] * b[i]).collect())
            }
            c => Err(Error::InvalidArgument(format!("luma needs 1 or 3 channels, got {c}"))),
        }
    }

    /// Rounds every sample to the nearest of 256 levels, as an 8-bit PNG would store it.
    pub fn quantize_u8(&self) -> Image {
        self.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
    }

    /// Replicates a single plane into `channels` planes.
    pub fn expand_channels(&self, channels: usize) -> Result<Image> {
        match (self.channels, channels) {
            (a, b) if a == b => Ok(self.clone()),
            (1, n) => Image::new(n, self.height, self.width, self.data.repeat(n)),
            (a, b) => Err(Error::InvalidArgument(format!("cannot convert {a} channels to {b}"))),
        }
    }
}
