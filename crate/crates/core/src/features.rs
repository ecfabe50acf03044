//! Region extraction and patch descriptors.

use crate::error::{Error, Result};
use crate::numerics::Vector;

/// Side of the square patch every region is resampled to.
pub const PATCH_SIDE: usize = 20;
pub const PATCH_LEN: usize = PATCH_SIDE * PATCH_SIDE;

pub const HOG_BINS: usize = 9;
pub const HOG_CELL: usize = 4;
const CELLS: usize = PATCH_SIDE / HOG_CELL;
const BLOCKS: usize = CELLS - 1;
pub const HOG_LEN: usize = BLOCKS * BLOCKS * 4 * HOG_BINS;
const HOG_EPS: f64 = 1e-6;

/// Smallest accepted frame side.
pub const MIN_FRAME_SIDE: usize = 32;

/// Luma of an RGB triple.
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// A grayscale frame with intensities in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
    pub index: usize,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>, index: usize) -> Result<Self> {
        if width < MIN_FRAME_SIDE || height < MIN_FRAME_SIDE {
            return Err(Error::input(format!(
                "frame is {width}x{height}, both sides must be at least {MIN_FRAME_SIDE}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::input(format!(
                "{} pixels for a {width}x{height} frame",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::input(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Self { width, height, pixels, index })
    }

    pub fn from_fn(width: usize, height: usize, index: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y) as f32);
            }
        }
        Self::new(width, height, pixels, index)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x] as f64
    }

    fn clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    /// Bilinear sample at pixel coordinates, pixel `(i, j)` sitting at
    /// `(i, j)`; coordinates beyond the border reuse the border pixels.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as isize, y0 as isize);
        let top = self.clamped(x0, y0) * (1.0 - fx) + self.clamped(x0 + 1, y0) * fx;
        let bottom = self.clamped(x0, y0 + 1) * (1.0 - fx) + self.clamped(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Axis-aligned box, `(x, y)` the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(Error::input("bounding box has non-finite fields"));
        }
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::input(format!("bounding box extents must be positive, got {w}x{h}")));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self { x: self.x + dx, y: self.y + dy, ..*self }
    }

    /// Area shared with the `width x height` frame rectangle.
    pub fn frame_overlap(&self, width: usize, height: usize) -> f64 {
        let ix = (self.x + self.w).min(width as f64) - self.x.max(0.0);
        let iy = (self.y + self.h).min(height as f64) - self.y.max(0.0);
        ix.max(0.0) * iy.max(0.0)
    }

    /// Shift the box the least amount needed to lie inside the frame;
    /// boxes larger than the frame are anchored at the origin.
    pub fn clamp_into(&self, width: usize, height: usize) -> Self {
        let x = self.x.min(width as f64 - self.w).max(0.0);
        let y = self.y.min(height as f64 - self.h).max(0.0);
        Self { x, y, ..*self }
    }
}

/// A resampled `20 x 20` region, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    values: Vec<f64>,
}

impl Patch {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != PATCH_LEN {
            return Err(Error::input(format!(
                "a patch has {PATCH_LEN} values, got {}",
                values.len()
            )));
        }
        Ok(Self { values })
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(PATCH_LEN);
        for r in 0..PATCH_SIDE {
            for c in 0..PATCH_SIDE {
                values.push(f(r, c));
            }
        }
        Self { values }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * PATCH_SIDE + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Bilinear resampling of `bbox` onto a `20 x 20` grid of cell centers.
pub fn crop_resize(frame: &Frame, bbox: &BoundingBox) -> Result<Patch> {
    if bbox.frame_overlap(frame.width(), frame.height()) <= 0.0 {
        return Err(Error::OutOfFrame {
            x: bbox.x,
            y: bbox.y,
            w: bbox.w,
            h: bbox.h,
            frame_w: frame.width(),
            frame_h: frame.height(),
        });
    }
    let sx = bbox.w / PATCH_SIDE as f64;
    let sy = bbox.h / PATCH_SIDE as f64;
    Ok(Patch::from_fn(|r, c| {
        let x = bbox.x + (c as f64 + 0.5) * sx - 0.5;
        let y = bbox.y + (r as f64 + 0.5) * sy - 0.5;
        frame.sample(x, y)
    }))
}

/// Histogram-of-oriented-gradients descriptor of a patch.
///
/// Central differences with replicated borders, nine unsigned orientation
/// bins centered on multiples of 20 degrees with linear interpolation
/// between neighbours, 4x4-pixel cells and overlapping 2x2-cell blocks,
/// each block scaled by `1 / sqrt(||v||^2 + eps^2)`.
pub fn hog(patch: &Patch) -> Vector {
    let n = PATCH_SIDE;
    let at = |r: isize, c: isize| patch.get(r.clamp(0, n as isize - 1) as usize, c.clamp(0, n as isize - 1) as usize);
    let bin_width = std::f64::consts::PI / HOG_BINS as f64;

    let mut cells = [[0.0f64; HOG_BINS]; CELLS * CELLS];
    for r in 0..n {
        for c in 0..n {
            let (ri, ci) = (r as isize, c as isize);
            let gx = at(ri, ci + 1) - at(ri, ci - 1);
            let gy = at(ri + 1, ci) - at(ri - 1, ci);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(std::f64::consts::PI);
            let pos = angle / bin_width;
            let lo = pos.floor();
            let frac = pos - lo;
            let lo = lo as usize % HOG_BINS;
            let hi = (lo + 1) % HOG_BINS;
            let cell = &mut cells[(r / HOG_CELL) * CELLS + c / HOG_CELL];
            cell[lo] += mag * (1.0 - frac);
            cell[hi] += mag * frac;
        }
    }

    let mut out = Vec::with_capacity(HOG_LEN);
    for br in 0..BLOCKS {
        for bc in 0..BLOCKS {
            let start = out.len();
            for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                out.extend_from_slice(&cells[(br + dr) * CELLS + bc + dc]);
            }
            let norm = (out[start..].iter().map(|v| v * v).sum::<f64>() + HOG_EPS * HOG_EPS).sqrt();
            for v in &mut out[start..] {
                *v /= norm;
            }
        }
    }
    Vector::from_vec(out)
}

/// Row-major flattening of a patch.
pub fn raw_feature(patch: &Patch) -> Vector {
    Vector::from_column_slice(patch.values())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureMode {
    #[default]
    Hog,
    Raw,
}

impl FeatureMode {
    /// Length of the feature vector this mode produces.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        match self {
            FeatureMode::Hog => HOG_LEN,
            FeatureMode::Raw => PATCH_LEN,
        }
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hog" => Ok(FeatureMode::Hog),
            "raw" => Ok(FeatureMode::Raw),
            other => Err(Error::input(format!("unknown feature mode `{other}`, expected hog or raw"))),
        }
    }
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureMode::Hog => "hog",
            FeatureMode::Raw => "raw",
        })
    }
}

/// Crop, resample and describe one region.
pub fn extract(frame: &Frame, bbox: &BoundingBox, mode: FeatureMode) -> Result<Vector> {
    let patch = crop_resize(frame, bbox)?;
    Ok(match mode {
        FeatureMode::Hog => hog(&patch),
        FeatureMode::Raw => raw_feature(&patch),
    })
}
