//! Binary morphology with square structuring elements and connected components.

use crate::error::Result;
use crate::Mask;

/// Running OR (or AND) over a window of ±r along one axis. Out-of-bounds samples
/// are ignored, which makes erosion the exact dual of dilation.
fn sweep(bits: &[bool], height: usize, width: usize, radius: usize, horizontal: bool, dilate: bool) -> Vec<bool> {
    let mut out = vec![false; bits.len()];
    let (outer, inner) = if horizontal { (height, width) } else { (width, height) };
    let at = |o: usize, i: usize| if horizontal { o * width + i } else { i * width + o };
    for o in 0..outer {
        // Prefix count of set samples along the line.
        let mut prefix = vec![0usize; inner + 1];
        for i in 0..inner {
            prefix[i + 1] = prefix[i] + bits[at(o, i)] as usize;
        }
        for i in 0..inner {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius + 1).min(inner);
            let set = prefix[hi] - prefix[lo];
            out[at(o, i)] = if dilate { set > 0 } else { set == hi - lo };
        }
    }
    out
}

/// Dilation by the (2r+1)×(2r+1) square.
pub fn dilate(mask: &Mask, radius: usize) -> Mask {
    if radius == 0 {
        return mask.clone();
    }
    let (h, w) = mask.dims();
    let rows = sweep(mask.bits(), h, w, radius, true, true);
    Mask::new(h, w, sweep(&rows, h, w, radius, false, true)).expect("same extents")
}

/// Erosion by the (2r+1)×(2r+1) square; the window is clipped to the image.
pub fn erode(mask: &Mask, radius: usize) -> Mask {
    if radius == 0 {
        return mask.clone();
    }
    let (h, w) = mask.dims();
    let rows = sweep(mask.bits(), h, w, radius, true, false);
    Mask::new(h, w, sweep(&rows, h, w, radius, false, false)).expect("same extents")
}

pub fn close(mask: &Mask, radius: usize) -> Mask {
    erode(&dilate(mask, radius), radius)
}

pub fn open(mask: &Mask, radius: usize) -> Mask {
    dilate(&erode(mask, radius), radius)
}

/// 8-connected component labelling.
#[derive(Clone, Debug)]
pub struct Components {
    /// 0 for background, 1..=count for components in raster order of first pixel.
    pub labels: Vec<u32>,
    /// `sizes[k]` is the pixel count of label k+1.
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Label of the largest component; ties go to the lowest label.
    pub fn largest(&self) -> Option<u32> {
        let mut best: Option<(usize, u32)> = None;
        for (k, &s) in self.sizes.iter().enumerate() {
            if best.map_or(true, |(bs, _)| s > bs) {
                best = Some((s, k as u32 + 1));
            }
        }
        best.map(|(_, l)| l)
    }
}

pub fn components(mask: &Mask) -> Components {
    let (h, w) = mask.dims();
    let mut labels = vec![0u32; h * w];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        let mut size = 0;
        labels[start] = label;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (y, x) = ((i / w) as isize, (i % w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.bits()[j] && labels[j] == 0 {
                        labels[j] = label;
                        stack.push(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    Components { labels, sizes }
}

pub fn component_count(mask: &Mask) -> usize {
    components(mask).count()
}

/// The largest 8-connected component (empty mask in, empty mask out).
pub fn largest_component(mask: &Mask) -> Result<Mask> {
    let comps = components(mask);
    let (h, w) = mask.dims();
    match comps.largest() {
        None => Mask::empty(h, w),
        Some(l) => Mask::new(h, w, comps.labels.iter().map(|&v| v == l).collect()),
    }
}
