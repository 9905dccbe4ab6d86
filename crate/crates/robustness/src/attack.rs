use std::fmt;
use std::str::FromStr;

use integscan_imaging::filter::gaussian_blur;
use integscan_imaging::resample::{crop, crop_mask, resize, resize_mask};
use integscan_imaging::{Image, Mask};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jpeg;

pub const SEVERITIES: std::ops::RangeInclusive<u8> = 1..=5;
const MIN_SIDE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Jpeg,
    Blur,
    Noise,
    Brightness,
    Contrast,
    Crop,
}

impl AttackKind {
    pub const ALL: &'static [AttackKind] =
        &[AttackKind::Jpeg, AttackKind::Blur, AttackKind::Noise, AttackKind::Brightness, AttackKind::Contrast, AttackKind::Crop];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Jpeg => "jpeg",
            AttackKind::Blur => "blur",
            AttackKind::Noise => "noise",
            AttackKind::Brightness => "brightness",
            AttackKind::Contrast => "contrast",
            AttackKind::Crop => "crop",
        }
    }

    /// Parameter per severity 1..=5: JPEG quality, blur σ, noise σ,
    /// brightness offset, contrast factor, retained crop fraction.
    pub fn ladder(self) -> [f64; 5] {
        match self {
            AttackKind::Jpeg => [90.0, 70.0, 50.0, 30.0, 10.0],
            AttackKind::Blur => [0.5, 1.0, 1.5, 2.0, 3.0],
            AttackKind::Noise => [0.02, 0.04, 0.06, 0.08, 0.12],
            AttackKind::Brightness => [0.05, 0.1, 0.15, 0.2, 0.3],
            AttackKind::Contrast => [0.9, 0.8, 0.7, 0.6, 0.5],
            AttackKind::Crop => [0.95, 0.90, 0.85, 0.80, 0.70],
        }
    }

    /// One line per kind, for usage messages.
    pub fn ladder_listing() -> String {
        AttackKind::ALL
            .iter()
            .map(|k| format!("{:<10} {:?}", k.as_str(), k.ladder()))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown attack {s:?}; expected one of jpeg, blur, noise, brightness, contrast, crop")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Attack {
    pub kind: AttackKind,
    pub severity: u8,
}

impl Attack {
    pub fn new(kind: AttackKind, severity: u8) -> Result<Self> {
        if !SEVERITIES.contains(&severity) {
            return Err(Error::InvalidArgument(format!("severity must lie in 1..=5, got {severity}")));
        }
        Ok(Self { kind, severity })
    }

    pub fn parameter(&self) -> f64 {
        self.kind.ladder()[self.severity as usize - 1]
    }

    /// Every kind at every severity, in ladder order.
    pub fn protocol() -> Vec<Attack> {
        AttackKind::ALL.iter().flat_map(|&kind| SEVERITIES.map(move |severity| Attack { kind, severity })).collect()
    }

    fn crop_window(&self, h: usize, w: usize) -> (usize, usize, usize, usize) {
        let keep = self.parameter();
        let ch = ((h as f64 * keep).round() as usize).clamp(1, h);
        let cw = ((w as f64 * keep).round() as usize).clamp(1, w);
        ((h - ch) / 2, (w - cw) / 2, ch, cw)
    }
}

impl fmt::Display for Attack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.kind, self.severity)
    }
}

/// Apply `attack`; the result has the input's shape and lies in [0, 1]. Only
/// `noise` consumes `seed`.
pub fn perturb(image: &Image, attack: &Attack, seed: u64) -> Result<Image> {
    let attack = Attack::new(attack.kind, attack.severity)?;
    let (c, h, w) = image.dims();
    if h < MIN_SIDE || w < MIN_SIDE {
        return Err(Error::InvalidArgument(format!("perturbation needs at least {MIN_SIDE}x{MIN_SIDE}, got {h}x{w}")));
    }
    let p = attack.parameter();
    let out = match attack.kind {
        AttackKind::Jpeg => {
            let table = jpeg::quant_table(p as u32)?;
            let mut planes = Vec::with_capacity(c);
            for ch in 0..c {
                planes.push(jpeg::dct_roundtrip(image.plane(ch), h, w, Some(&table))?);
            }
            Image::from_planes(planes, h, w)?
        }
        AttackKind::Blur => gaussian_blur(image, p)?,
        AttackKind::Noise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = Normal::new(0.0, p).expect("ladder σ is positive");
            let data = image.data().iter().map(|v| v + n.sample(&mut rng)).collect();
            Image::new(c, h, w, data)?
        }
        AttackKind::Brightness => image.map(|v| v + p),
        AttackKind::Contrast => image.map(|v| 0.5 + p * (v - 0.5)),
        AttackKind::Crop => {
            let (y0, x0, ch, cw) = attack.crop_window(h, w);
            resize(&crop(image, y0, x0, ch, cw)?, h, w)?
        }
    };
    Ok(out.clamp01())
}

/// The ground truth that corresponds to a perturbed image: unchanged except
/// for `crop`, which crops and resizes (nearest) like the image.
pub fn perturb_mask(mask: &Mask, attack: &Attack) -> Result<Mask> {
    let attack = Attack::new(attack.kind, attack.severity)?;
    if attack.kind != AttackKind::Crop {
        return Ok(mask.clone());
    }
    let (h, w) = mask.dims();
    let (y0, x0, ch, cw) = attack.crop_window(h, w);
    Ok(resize_mask(&crop_mask(mask, y0, x0, ch, cw)?, h, w)?)
}
