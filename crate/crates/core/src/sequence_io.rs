//! On-disk sequences, ground truth, results and configuration.
//!
//! A sequence directory holds `img/` with numbered frames (PNG, PGM/PPM or
//! JPEG) and optionally `groundtruth_rect.txt` with one `x,y,w,h` line per
//! frame.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::classifier::Loss;
use crate::embedding::LambdaScale;
use crate::error::{Error, Result};
use crate::features::{luma, BoundingBox, FeatureMode, Frame, MIN_FRAME_SIDE};
use crate::tracker::TrackerConfig;

pub const IMAGE_DIR: &str = "img";
pub const GROUNDTRUTH_FILE: &str = "groundtruth_rect.txt";
const IMAGE_EXTENSIONS: [&str; 6] = ["png", "pgm", "ppm", "pnm", "jpg", "jpeg"];

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceManifest {
    pub name: String,
    pub frame_paths: Vec<PathBuf>,
    pub ground_truth: Option<Vec<BoundingBox>>,
}

impl SequenceManifest {
    pub fn len(&self) -> usize {
        self.frame_paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_paths.is_empty()
    }

    pub fn load_frame(&self, index: usize) -> Result<Frame> {
        let path = self
            .frame_paths
            .get(index)
            .ok_or_else(|| Error::input(format!("frame {index} out of range for {} frames", self.len())))?;
        read_frame(path, index)
    }

    pub fn load_frames(&self) -> Result<Vec<Frame>> {
        (0..self.len()).map(|i| self.load_frame(i)).collect()
    }
}

/// Sort key: the last run of digits in the file stem, then the name.
fn frame_key(path: &Path) -> (u128, String) {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let digits: String = stem
        .chars()
        .rev()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    (digits.parse().unwrap_or(u128::MAX), stem.to_string())
}

/// List the frames of a sequence directory and read its ground truth.
///
/// Frame headers are checked so unreadable files fail here; pixel data is
/// decoded on demand.
pub fn load_sequence(dir: &Path) -> Result<SequenceManifest> {
    let img = dir.join(IMAGE_DIR);
    if !img.is_dir() {
        return Err(Error::EmptySequence(dir.to_path_buf()));
    }
    let mut frames: Vec<PathBuf> = fs::read_dir(&img)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    if frames.is_empty() {
        return Err(Error::EmptySequence(dir.to_path_buf()));
    }
    frames.sort_by_cached_key(|p| frame_key(p));
    for path in &frames {
        image::image_dimensions(path).map_err(|e| Error::Decode { path: path.clone(), reason: e.to_string() })?;
    }

    let gt_path = dir.join(GROUNDTRUTH_FILE);
    let ground_truth = if gt_path.is_file() {
        let boxes = parse_groundtruth(&fs::read_to_string(&gt_path)?)?;
        if boxes.len() != frames.len() {
            return Err(Error::CountMismatch { frames: frames.len(), boxes: boxes.len() });
        }
        Some(boxes)
    } else {
        None
    };
    let name = dir
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| dir.display().to_string());
    Ok(SequenceManifest { name, frame_paths: frames, ground_truth })
}

pub fn read_frame(path: &Path, index: usize) -> Result<Frame> {
    let bytes = fs::read(path)?;
    decode_frame(&bytes, index).map_err(|e| match e {
        Error::Decode { reason, .. } => Error::Decode { path: path.to_path_buf(), reason },
        other => other,
    })
}

/// Decode an encoded image into a grayscale frame; color goes through luma.
pub fn decode_frame(bytes: &[u8], index: usize) -> Result<Frame> {
    let decode_err = |reason: String| Error::Decode { path: PathBuf::new(), reason };
    let img = image::load_from_memory(bytes).map_err(|e| decode_err(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w < MIN_FRAME_SIDE || h < MIN_FRAME_SIDE {
        return Err(decode_err(format!("image is {w}x{h}, frames must be at least {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}")));
    }
    let pixels: Vec<f32> = if img.color().has_color() {
        img.into_rgb32f()
            .pixels()
            .map(|p| luma(p[0] as f64, p[1] as f64, p[2] as f64).clamp(0.0, 1.0) as f32)
            .collect()
    } else {
        img.to_luma32f().pixels().map(|p| p[0].clamp(0.0, 1.0)).collect()
    };
    Frame::new(w, h, pixels, index)
}

/// Encode a frame as a 16-bit grayscale PNG.
pub fn write_frame_png(path: &Path, frame: &Frame) -> Result<()> {
    let data: Vec<u16> = frame.pixels().iter().map(|&p| (p as f64 * 65535.0).round() as u16).collect();
    let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(frame.width() as u32, frame.height() as u32, data)
        .expect("buffer length matches the frame");
    buf.save(path).map_err(|e| Error::Decode { path: path.to_path_buf(), reason: e.to_string() })
}

/// One box per non-empty line, fields separated by commas, tabs or spaces.
pub fn parse_groundtruth(text: &str) -> Result<Vec<BoundingBox>> {
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| Error::Parse { line: i + 1, reason };
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields x,y,w,h, got {}", fields.len())));
        }
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| err(format!("`{f}` is not a number")))?;
        }
        if !(v[2] > 0.0 && v[3] > 0.0) {
            return Err(err(format!("width and height must be positive, got {}x{}", v[2], v[3])));
        }
        boxes.push(BoundingBox { x: v[0], y: v[1], w: v[2], h: v[3] });
    }
    Ok(boxes)
}

pub fn read_groundtruth(path: &Path) -> Result<Vec<BoundingBox>> {
    parse_groundtruth(&fs::read_to_string(path)?)
}

pub fn format_results(boxes: &[BoundingBox]) -> String {
    boxes.iter().map(|b| format!("{:.2},{:.2},{:.2},{:.2}\n", b.x, b.y, b.w, b.h)).collect()
}

/// One `x,y,w,h` line per box with two decimals.
pub fn write_results(path: &Path, boxes: &[BoundingBox]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(format_results(boxes).as_bytes())?;
    Ok(())
}

/// One `key = value` entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyValue {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Flat `key = value` lines; `#` starts a comment, blank lines are skipped
/// and a repeated key is an error.
pub fn parse_key_values(text: &str) -> Result<Vec<KeyValue>> {
    let mut out: Vec<KeyValue> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: i + 1, reason: format!("expected `key = value`, got `{line}`") })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(Error::Parse { line: i + 1, reason: "empty key".into() });
        }
        if out.iter().any(|kv| kv.key == key) {
            return Err(Error::Config { key: key.into(), reason: format!("repeated on line {}", i + 1) });
        }
        out.push(KeyValue { line: i + 1, key: key.into(), value: value.into() });
    }
    Ok(out)
}

/// Keys accepted by [`parse_config`].
pub const CONFIG_KEYS: [&str; 20] = [
    "n_candidates",
    "trans_std",
    "scale_std",
    "buffer_size",
    "n_background",
    "shift_magnitudes",
    "relearn_interval",
    "feature_mode",
    "seed",
    "temperature",
    "classifier",
    "classifier_reg",
    "lambda",
    "lambda_scale",
    "mu_factor",
    "tol",
    "max_iter",
    "label_sigma",
    "robust",
    "projection_max_iter",
];

/// Build a tracker configuration; absent keys keep their defaults.
pub fn parse_config(text: &str) -> Result<TrackerConfig> {
    let mut cfg = TrackerConfig::default();
    for KeyValue { key, value, .. } in parse_key_values(text)? {
        let err = |reason: String| Error::Config { key: key.clone(), reason };
        let num = |v: &str| {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| err(format!("`{v}` is not a number")))
        };
        let int = |v: &str| v.parse::<usize>().map_err(|_| err(format!("`{v}` is not a non-negative integer")));
        match key.as_str() {
            "n_candidates" => cfg.n_candidates = int(&value)?,
            "trans_std" => cfg.trans_std = num(&value)?,
            "scale_std" => cfg.scale_std = num(&value)?,
            "buffer_size" => cfg.buffer_size = int(&value)?,
            "n_background" => cfg.n_background = int(&value)?,
            "shift_magnitudes" => {
                cfg.shift_magnitudes = value.split(',').map(|s| num(s.trim())).collect::<Result<_>>()?;
            }
            "relearn_interval" => cfg.relearn_interval = int(&value)?,
            "feature_mode" => cfg.feature_mode = value.parse::<FeatureMode>().map_err(|e| err(e.to_string()))?,
            "seed" => cfg.seed = value.parse().map_err(|_| err(format!("`{value}` is not a seed")))?,
            "temperature" => cfg.temperature = num(&value)?,
            "classifier" => {
                cfg.classifier = match value.as_str() {
                    "ridge" => Loss::Ridge,
                    "hinge" => Loss::Hinge,
                    v => return Err(err(format!("`{v}` is not ridge or hinge"))),
                }
            }
            "classifier_reg" => cfg.classifier_reg = Some(num(&value)?),
            "lambda" => cfg.solver.lambda = num(&value)?,
            "lambda_scale" => {
                cfg.solver.lambda_scale = match value.as_str() {
                    "absolute" => LambdaScale::Absolute,
                    "robust_pca" => LambdaScale::RobustPca,
                    v => return Err(err(format!("`{v}` is not absolute or robust_pca"))),
                }
            }
            "mu_factor" => cfg.solver.mu_factor = num(&value)?,
            "tol" => cfg.solver.tol = num(&value)?,
            "max_iter" => cfg.solver.max_iter = int(&value)?,
            "label_sigma" => cfg.solver.label_sigma = num(&value)?,
            "robust" => cfg.solver.robust = value.parse().map_err(|_| err(format!("`{value}` is not true or false")))?,
            "projection_max_iter" => cfg.projection.max_iter = int(&value)?,
            _ => return Err(err("unknown key".into())),
        }
    }
    cfg.validate().map_err(|e| match e {
        Error::InvalidParameter { name, reason } => Error::Config { key: name.into(), reason },
        other => other,
    })?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<TrackerConfig> {
    parse_config(&fs::read_to_string(path)?)
}

/// Write a sequence in the on-disk layout: `img/0001.png`.. and the
/// ground-truth file.
pub fn write_sequence(dir: &Path, frames: &[Frame], ground_truth: &[BoundingBox]) -> Result<()> {
    let img = dir.join(IMAGE_DIR);
    fs::create_dir_all(&img)?;
    let width = frames.len().to_string().len().max(4);
    for (i, frame) in frames.iter().enumerate() {
        write_frame_png(&img.join(format!("{:0width$}.png", i + 1)), frame)?;
    }
    write_results(&dir.join(GROUNDTRUTH_FILE), ground_truth)
}
