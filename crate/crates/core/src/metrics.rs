//! One-pass evaluation criteria and subspace diagnostics.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::features::BoundingBox;

/// Center-error thresholds `0..=50` px.
pub const PRECISION_THRESHOLDS: usize = 51;
/// Overlap thresholds `0, 0.05, .., 1`.
pub const SUCCESS_THRESHOLDS: usize = 21;

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Distance between box centers in pixels.
pub fn center_error(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

pub fn success_threshold(k: usize) -> f64 {
    k as f64 / (SUCCESS_THRESHOLDS - 1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    /// Fraction of frames with center error `<= k` px, `k = 0..=50`.
    pub precision_curve: Vec<f64>,
    pub precision_at_20: f64,
    /// Fraction of frames with a nonzero overlap of at least `k / 20`.
    pub success_curve: Vec<f64>,
    pub auc: f64,
    pub mean_center_error: f64,
    pub mean_overlap: f64,
    pub frames: usize,
}

pub fn evaluate(results: &[BoundingBox], gt: &[BoundingBox]) -> Result<EvaluationReport> {
    if results.len() != gt.len() {
        return Err(Error::input(format!(
            "{} result boxes but {} ground-truth boxes",
            results.len(),
            gt.len()
        )));
    }
    if results.is_empty() {
        return Err(Error::input("nothing to evaluate"));
    }
    let n = results.len();
    let errors: Vec<f64> = results.iter().zip(gt).map(|(r, g)| center_error(r, g)).collect();
    let overlaps: Vec<f64> = results.iter().zip(gt).map(|(r, g)| iou(r, g)).collect();

    let fraction = |count: usize| count as f64 / n as f64;
    let precision_curve: Vec<f64> = (0..PRECISION_THRESHOLDS)
        .map(|t| fraction(errors.iter().filter(|&&e| e <= t as f64).count()))
        .collect();
    // A frame only counts as a success if the boxes overlap at all, so a
    // lost target scores 0 at every threshold including 0.
    let success_curve: Vec<f64> = (0..SUCCESS_THRESHOLDS)
        .map(|k| {
            let t = success_threshold(k);
            fraction(overlaps.iter().filter(|&&o| o > 0.0 && o >= t).count())
        })
        .collect();
    let auc = success_curve.iter().sum::<f64>() / SUCCESS_THRESHOLDS as f64;
    Ok(EvaluationReport {
        precision_at_20: precision_curve[20],
        precision_curve,
        success_curve,
        auc,
        mean_center_error: errors.iter().sum::<f64>() / n as f64,
        mean_overlap: overlaps.iter().sum::<f64>() / n as f64,
        frames: n,
    })
}

impl EvaluationReport {
    /// Flat `key = value` block.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "frames = {}", self.frames);
        let _ = writeln!(s, "precision_at_20 = {:.6}", self.precision_at_20);
        let _ = writeln!(s, "auc = {:.6}", self.auc);
        let _ = writeln!(s, "mean_center_error = {:.6}", self.mean_center_error);
        let _ = writeln!(s, "mean_overlap = {:.6}", self.mean_overlap);
        s
    }

    pub fn precision_csv(&self) -> String {
        curve_csv(
            "threshold_px,precision",
            self.precision_curve.iter().enumerate().map(|(k, &v)| (k as f64, v)),
        )
    }

    pub fn success_csv(&self) -> String {
        curve_csv(
            "threshold_iou,success",
            self.success_curve.iter().enumerate().map(|(k, &v)| (success_threshold(k), v)),
        )
    }
}

fn curve_csv(header: &str, points: impl Iterator<Item = (f64, f64)>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for (t, v) in points {
        let _ = writeln!(s, "{t},{v}");
    }
    s
}

/// Parse a two-column curve dump: one header line, then `threshold,value`.
pub fn parse_curve_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.split(',').count() == 2 => {}
        Some((i, _)) => {
            return Err(Error::Parse { line: i + 1, reason: "expected a two-column header".into() })
        }
        None => return Err(Error::Parse { line: 1, reason: "empty curve file".into() }),
    }
    lines
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 {
                return Err(Error::Parse { line: i + 1, reason: format!("expected 2 fields, got {}", fields.len()) });
            }
            let parse = |f: &str| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse { line: i + 1, reason: format!("`{f}` is not a number") })
            };
            Ok((parse(fields[0])?, parse(fields[1])?))
        })
        .collect()
}

/// Dimension reduction ratio `d / min(m, n)`.
pub fn drr(d: usize, m: usize, n: usize) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(Error::param("m, n", "must both be >= 1"));
    }
    let cap = m.min(n);
    if d > cap {
        return Err(Error::param("d", format!("{d} exceeds min(m, n) = {cap}")));
    }
    Ok(d as f64 / cap as f64)
}

/// Fisher discriminative ratio of scalar responses,
/// `(mean_pos - mean_neg)^2 / (var_pos + var_neg + 1e-12)`.
pub fn fdr(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::input("fdr needs responses from both classes"));
    }
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    };
    let (mp, vp) = stats(pos);
    let (mn, vn) = stats(neg);
    Ok((mp - mn).powi(2) / (vp + vn + 1e-12))
}
