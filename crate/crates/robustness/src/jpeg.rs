//! Baseline-JPEG degradation without entropy coding: 8×8 orthonormal DCT,
//! quantize-dequantize against a quality-scaled table, inverse DCT.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const BLOCK: usize = 8;

/// Annex K luminance table, row-major.
pub const LUMA_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// The luminance table under the conventional quality rule.
pub fn quant_table(quality: u32) -> Result<[u16; 64]> {
    if !(1..=100).contains(&quality) {
        return Err(Error::InvalidArgument(format!("JPEG quality must lie in 1..=100, got {quality}")));
    }
    let scale = if quality < 50 { 5000 / quality } else { 200 - 2 * quality };
    Ok(LUMA_TABLE.map(|b| ((b as u32 * scale + 50) / 100).clamp(1, 255) as u16))
}

/// `basis[u][x]` of the orthonormal 1-D DCT-II.
fn basis() -> &'static [[f64; BLOCK]; BLOCK] {
    static B: OnceLock<[[f64; BLOCK]; BLOCK]> = OnceLock::new();
    B.get_or_init(|| {
        let mut b = [[0.0; BLOCK]; BLOCK];
        for (u, row) in b.iter_mut().enumerate() {
            let a = if u == 0 { (1.0 / BLOCK as f64).sqrt() } else { (2.0 / BLOCK as f64).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = a * ((2 * x + 1) as f64 * u as f64 * PI / (2 * BLOCK) as f64).cos();
            }
        }
        b
    })
}

pub fn dct2(block: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut tmp = [0.0; 64];
    for y in 0..BLOCK {
        for u in 0..BLOCK {
            tmp[y * BLOCK + u] = (0..BLOCK).map(|x| b[u][x] * block[y * BLOCK + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..BLOCK {
        for u in 0..BLOCK {
            out[v * BLOCK + u] = (0..BLOCK).map(|y| b[v][y] * tmp[y * BLOCK + u]).sum();
        }
    }
    out
}

pub fn idct2(coef: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut tmp = [0.0; 64];
    for v in 0..BLOCK {
        for x in 0..BLOCK {
            tmp[v * BLOCK + x] = (0..BLOCK).map(|u| b[u][x] * coef[v * BLOCK + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..BLOCK {
        for x in 0..BLOCK {
            out[y * BLOCK + x] = (0..BLOCK).map(|v| b[v][y] * tmp[v * BLOCK + x]).sum();
        }
    }
    out
}

/// Blockwise DCT round trip of a [0, 1] plane on the 8-bit level scale.
/// `table = None` skips quantization. Edge blocks are padded by replication
/// and the padding is discarded. The result is not clipped.
pub fn dct_roundtrip(plane: &[f64], height: usize, width: usize, table: Option<&[u16; 64]>) -> Result<Vec<f64>> {
    if height < BLOCK || width < BLOCK || plane.len() != height * width {
        return Err(Error::InvalidArgument(format!("JPEG simulation needs a plane of at least 8x8, got {height}x{width}")));
    }
    let mut out = vec![0.0; plane.len()];
    for by in (0..height).step_by(BLOCK) {
        for bx in (0..width).step_by(BLOCK) {
            let mut block = [0.0; 64];
            for y in 0..BLOCK {
                for x in 0..BLOCK {
                    let (sy, sx) = ((by + y).min(height - 1), (bx + x).min(width - 1));
                    block[y * BLOCK + x] = plane[sy * width + sx] * 255.0 - 128.0;
                }
            }
            let mut c = dct2(&block);
            if let Some(t) = table {
                for (v, &q) in c.iter_mut().zip(t) {
                    *v = (*v / q as f64).round() * q as f64;
                }
            }
            let r = idct2(&c);
            for y in 0..BLOCK.min(height - by) {
                for x in 0..BLOCK.min(width - bx) {
                    out[(by + y) * width + bx + x] = (r[y * BLOCK + x] + 128.0) / 255.0;
                }
            }
        }
    }
    Ok(out)
}
