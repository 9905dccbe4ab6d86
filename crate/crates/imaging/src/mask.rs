use crate::error::{Error, Result};

/// Binary h×w map.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!("mask extents must be positive, got {height}x{width}")));
        }
        if bits.len() != height * width {
            return Err(Error::Shape(format!("{} bits for a {height}x{width} mask", bits.len())));
        }
        Ok(Mask { height, width, bits })
    }

    pub fn empty(height: usize, width: usize) -> Result<Self> {
        Mask::new(height, width, vec![false; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let bits = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Mask::new(height, width, bits)
    }

    /// Interprets exact 0.0 / 1.0 samples; anything else is rejected.
    pub fn from_binary_values(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        let bits = values
            .iter()
            .map(|&v| match v {
                v if v == 0.0 => Ok(false),
                v if v == 1.0 => Ok(true),
                v => Err(Error::InvalidArgument(format!("mask value {v} is not binary"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Mask::new(height, width, bits)
    }

    pub fn threshold(height: usize, width: usize, values: &[f64], t: f64) -> Result<Self> {
        Mask::new(height, width, values.iter().map(|&v| v >= t).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn area_fraction(&self) -> f64 {
        self.count() as f64 / self.bits.len() as f64
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    pub fn to_values(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    fn check_same(&self, other: &Mask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.dims(), other.dims())));
        }
        Ok(())
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.check_same(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect();
        Mask::new(self.height, self.width, bits)
    }

    pub fn intersection(&self, other: &Mask) -> Result<Mask> {
        self.check_same(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect();
        Mask::new(self.height, self.width, bits)
    }

    pub fn overlaps(&self, other: &Mask) -> Result<bool> {
        self.check_same(other)?;
        Ok(self.bits.iter().zip(&other.bits).any(|(a, b)| *a && *b))
    }

    pub fn not(&self) -> Mask {
        Mask { bits: self.bits.iter().map(|b| !b).collect(), ..self.clone() }
    }

    /// True if any set pixel lies in the outermost row or column.
    pub fn touches_border(&self) -> bool {
        let (h, w) = self.dims();
        (0..w).any(|x| self.get(0, x) || self.get(h - 1, x)) || (0..h).any(|y| self.get(y, 0) || self.get(y, w - 1))
    }

    /// Inclusive bounding box `(y0, x0, y1, x1)` of the set pixels.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for (i, _) in self.bits.iter().enumerate().filter(|(_, &b)| b) {
            let (y, x) = (i / self.width, i % self.width);
            bb = Some(match bb {
                None => (y, x, y, x),
                Some((y0, x0, y1, x1)) => (y0.min(y), x0.min(x), y1.max(y), x1.max(x)),
            });
        }
        bb
    }
}
