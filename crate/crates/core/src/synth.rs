//! Seeded synthetic sequences with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::{BoundingBox, Frame, MIN_FRAME_SIDE};
use crate::sequence_io::{parse_key_values, KeyValue};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occlusion {
    /// First and last occluded frame, inclusive.
    pub start: usize,
    pub end: usize,
    /// Fraction of the patch area covered.
    pub fraction: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub length: usize,
    /// Patch box on frame 0.
    pub patch: BoundingBox,
    /// Pixels per frame.
    pub velocity: (f64, f64),
    pub occlusion: Option<Occlusion>,
    /// Linear patch gain from the first to the last frame.
    pub illumination: Option<(f64, f64)>,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// 320x240, 120 frames, a 48x48 patch drifting at (1.5, 0.8) px/frame,
    /// 40% occlusion on frames 50-60, gain 0.7 to 1.3 and noise 0.02.
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            length: 120,
            patch: BoundingBox { x: 40.0, y: 40.0, w: 48.0, h: 48.0 },
            velocity: (1.5, 0.8),
            occlusion: Some(Occlusion { start: 50, end: 60, fraction: 0.4, intensity: 0.5 }),
            illumination: Some((0.7, 1.3)),
            noise_std: 0.02,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn gt_box(&self, t: usize) -> BoundingBox {
        self.patch.translated(t as f64 * self.velocity.0, t as f64 * self.velocity.1)
    }

    pub fn gain(&self, t: usize) -> f64 {
        match self.illumination {
            None => 1.0,
            Some((g0, g1)) if self.length > 1 => g0 + (g1 - g0) * t as f64 / (self.length - 1) as f64,
            Some((g0, _)) => g0,
        }
    }

    pub fn occluded(&self, t: usize) -> bool {
        self.occlusion.is_some_and(|o| (o.start..=o.end).contains(&t))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.width < MIN_FRAME_SIDE || self.height < MIN_FRAME_SIDE {
            return bad(format!("frame must be at least {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}"));
        }
        if self.length == 0 {
            return bad("length must be >= 1".into());
        }
        let p = &self.patch;
        if ![p.x, p.y, p.w, p.h, self.velocity.0, self.velocity.1].iter().all(|v| v.is_finite()) {
            return bad("patch and velocity must be finite".into());
        }
        if !(p.w >= 2.0 && p.h >= 2.0) {
            return bad("patch must be at least 2x2".into());
        }
        for t in [0, self.length - 1] {
            let b = self.gt_box(t);
            if b.x < 0.0 || b.y < 0.0 || b.x + b.w > self.width as f64 || b.y + b.h > self.height as f64 {
                return bad(format!(
                    "patch leaves the {}x{} frame at frame {t}: ({:.2}, {:.2}, {:.2}, {:.2})",
                    self.width, self.height, b.x, b.y, b.w, b.h
                ));
            }
        }
        if let Some(o) = self.occlusion {
            if !(0.0..=1.0).contains(&o.fraction) {
                return bad(format!("occlusion fraction {} outside [0, 1]", o.fraction));
            }
            if !(0.0..=1.0).contains(&o.intensity) {
                return bad(format!("occluder intensity {} outside [0, 1]", o.intensity));
            }
            if o.end < o.start {
                return bad("occlusion ends before it starts".into());
            }
        }
        if let Some((g0, g1)) = self.illumination {
            if !(g0 > 0.0 && g1 > 0.0 && g0.is_finite() && g1.is_finite()) {
                return bad("gains must be finite and > 0".into());
            }
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return bad("noise_std must be a finite value >= 0".into());
        }
        Ok(())
    }
}

/// Lattice value noise: uniform values on a grid with spacing `cell`,
/// bilinearly interpolated, spanning `[lo, hi]`.
fn value_noise(rng: &mut ChaCha8Rng, width: usize, height: usize, cell: f64, lo: f64, hi: f64) -> Vec<f64> {
    let gw = (width as f64 / cell).ceil() as usize + 2;
    let gh = (height as f64 / cell).ceil() as usize + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(lo..=hi)).collect();
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (u, v) = (x as f64 / cell, y as f64 / cell);
            let (i, j) = (u.floor() as usize, v.floor() as usize);
            let (fu, fv) = (u.fract(), v.fract());
            let g = |a: usize, b: usize| grid[b * gw + a];
            let top = g(i, j) * (1.0 - fu) + g(i + 1, j) * fu;
            let bottom = g(i, j + 1) * (1.0 - fu) + g(i + 1, j + 1) * fu;
            out.push(top * (1.0 - fv) + bottom * fv);
        }
    }
    out
}

/// Rendered frames and their ground-truth boxes.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub frames: Vec<Frame>,
    pub ground_truth: Vec<BoundingBox>,
}

pub fn generate_sequence(spec: &SynthSpec) -> Result<SyntheticSequence> {
    render(spec, true)
}

/// As [`generate_sequence`] but with the occluder left out; the noise draws
/// are identical.
pub fn generate_unoccluded(spec: &SynthSpec) -> Result<SyntheticSequence> {
    render(spec, false)
}

fn render(spec: &SynthSpec, with_occluder: bool) -> Result<SyntheticSequence> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let background = value_noise(&mut rng, w, h, 16.0, 0.3, 0.7);
    let (tw, th) = (spec.patch.w.ceil() as usize, spec.patch.h.ceil() as usize);
    let texture = value_noise(&mut rng, tw, th, 6.0, 0.0, 1.0);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidSpec(e.to_string()))?;

    let tex = |u: f64, v: f64| {
        let u = u.clamp(0.0, (tw - 1) as f64);
        let v = v.clamp(0.0, (th - 1) as f64);
        let (i, j) = (u.floor() as usize, v.floor() as usize);
        let (i1, j1) = ((i + 1).min(tw - 1), (j + 1).min(th - 1));
        let (fu, fv) = (u - i as f64, v - j as f64);
        let top = texture[j * tw + i] * (1.0 - fu) + texture[j * tw + i1] * fu;
        let bottom = texture[j1 * tw + i] * (1.0 - fu) + texture[j1 * tw + i1] * fu;
        top * (1.0 - fv) + bottom * fv
    };

    let mut frames = Vec::with_capacity(spec.length);
    let mut ground_truth = Vec::with_capacity(spec.length);
    for t in 0..spec.length {
        let b = spec.gt_box(t);
        let gain = spec.gain(t);
        let occluder = match spec.occlusion {
            Some(o) if with_occluder && spec.occluded(t) => {
                let s = o.fraction.sqrt();
                let (cx, cy) = b.center();
                let (ow, oh) = (b.w * s, b.h * s);
                Some((cx - ow / 2.0, cy - oh / 2.0, cx + ow / 2.0, cy + oh / 2.0, o.intensity))
            }
            _ => None,
        };
        let mut pixels = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                // Pixel (x, y) covers [x, x + 1) x [y, y + 1).
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let mut v = background[y * w + x];
                if px >= b.x && px < b.x + b.w && py >= b.y && py < b.y + b.h {
                    v = gain * tex(px - b.x - 0.5, py - b.y - 0.5);
                }
                if let Some((x0, y0, x1, y1, level)) = occluder {
                    if px >= x0 && px < x1 && py >= y0 && py < y1 {
                        v = level;
                    }
                }
                let n = noise.sample(&mut rng);
                pixels.push((v + n).clamp(0.0, 1.0) as f32);
            }
        }
        frames.push(Frame::new(w, h, pixels, t)?);
        ground_truth.push(b);
    }
    Ok(SyntheticSequence { frames, ground_truth })
}

/// Parse a `key = value` spec; missing keys keep the defaults.
///
/// Keys: `width`, `height`, `length`, `seed`, `patch_x`, `patch_y`,
/// `patch_w`, `patch_h`, `vx`, `vy`, `noise_std`, `gain_start`, `gain_end`,
/// `occlusion_start`, `occlusion_end`, `occlusion_fraction`,
/// `occluder_intensity`. A gain or occlusion set is disabled with `none`.
pub fn parse_synth_spec(text: &str) -> Result<SynthSpec> {
    let mut spec = SynthSpec::default();
    let mut gains = spec.illumination;
    let mut occ = spec.occlusion;
    for KeyValue { line, key, value } in parse_key_values(text)? {
        let spec_err = |reason: String| Error::InvalidSpec(format!("line {line}: `{key}`: {reason}"));
        let num = |v: &str| v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| spec_err(format!("`{v}` is not a number")));
        let int = |v: &str| v.parse::<usize>().map_err(|_| spec_err(format!("`{v}` is not a non-negative integer")));
        let off = value.eq_ignore_ascii_case("none");
        match key.as_str() {
            "width" => spec.width = int(&value)?,
            "height" => spec.height = int(&value)?,
            "length" => spec.length = int(&value)?,
            "seed" => spec.seed = value.parse().map_err(|_| spec_err(format!("`{value}` is not a seed")))?,
            "patch_x" => spec.patch.x = num(&value)?,
            "patch_y" => spec.patch.y = num(&value)?,
            "patch_w" => spec.patch.w = num(&value)?,
            "patch_h" => spec.patch.h = num(&value)?,
            "vx" => spec.velocity.0 = num(&value)?,
            "vy" => spec.velocity.1 = num(&value)?,
            "noise_std" => spec.noise_std = num(&value)?,
            "gain_start" | "gain_end" if off => gains = None,
            "gain_start" => gains = Some((num(&value)?, gains.map_or(1.0, |g| g.1))),
            "gain_end" => gains = Some((gains.map_or(1.0, |g| g.0), num(&value)?)),
            "occlusion_start" | "occlusion_end" | "occlusion_fraction" | "occluder_intensity" if off => occ = None,
            "occlusion_start" | "occlusion_end" | "occlusion_fraction" | "occluder_intensity" => {
                let mut o = occ.unwrap_or(Occlusion { start: 0, end: 0, fraction: 0.0, intensity: 0.5 });
                match key.as_str() {
                    "occlusion_start" => o.start = int(&value)?,
                    "occlusion_end" => o.end = int(&value)?,
                    "occlusion_fraction" => o.fraction = num(&value)?,
                    _ => o.intensity = num(&value)?,
                }
                occ = Some(o);
            }
            _ => return Err(spec_err("unknown key".into())),
        }
    }
    spec.illumination = gains;
    spec.occlusion = occ;
    spec.validate()?;
    Ok(spec)
}

/// Inverse of [`parse_synth_spec`].
pub fn format_synth_spec(spec: &SynthSpec) -> String {
    let mut s = format!(
        "width = {}\nheight = {}\nlength = {}\nseed = {}\npatch_x = {}\npatch_y = {}\npatch_w = {}\npatch_h = {}\nvx = {}\nvy = {}\nnoise_std = {}\n",
        spec.width,
        spec.height,
        spec.length,
        spec.seed,
        spec.patch.x,
        spec.patch.y,
        spec.patch.w,
        spec.patch.h,
        spec.velocity.0,
        spec.velocity.1,
        spec.noise_std
    );
    match spec.illumination {
        Some((g0, g1)) => s += &format!("gain_start = {g0}\ngain_end = {g1}\n"),
        None => s += "gain_start = none\n",
    }
    match spec.occlusion {
        Some(o) => {
            s += &format!(
                "occlusion_start = {}\nocclusion_end = {}\nocclusion_fraction = {}\noccluder_intensity = {}\n",
                o.start, o.end, o.fraction, o.intensity
            )
        }
        None => s += "occlusion_start = none\n",
    }
    s
}
