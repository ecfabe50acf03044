//! Particle-filter tracking driven by the learned subspace.
//!
//! Every frame draws candidates around the previous particle cloud, scores
//! each by its normalized representation plus discrimination error, and
//! keeps the best one. The subspace and classifier are re-learned from the
//! target buffer and the latest background ring at a fixed interval.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;

use crate::classifier::{self, LinearClassifier, Loss};
use crate::embedding::{learn_embedding, SolverConfig, SubspaceModel, TrainingSet};
use crate::error::{Error, Result};
use crate::features::{extract, BoundingBox, FeatureMode, Frame};
use crate::numerics::{Matrix, Vector};
use crate::representation::{project_candidate, ProjectionConfig};

/// Position of the box center and its scale relative to the initial box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionState {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

/// Scale factors are kept inside this range while sampling.
const SIGMA_RANGE: (f64, f64) = (0.2, 5.0);

impl MotionState {
    pub fn to_box(&self, base_w: f64, base_h: f64) -> BoundingBox {
        let (w, h) = (base_w * self.sigma, base_h * self.sigma);
        BoundingBox { x: self.x - w / 2.0, y: self.y - h / 2.0, w, h }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub n_candidates: usize,
    pub trans_std: f64,
    pub scale_std: f64,
    pub buffer_size: usize,
    pub n_background: usize,
    pub shift_magnitudes: Vec<f64>,
    pub relearn_interval: usize,
    pub feature_mode: FeatureMode,
    pub solver: SolverConfig,
    pub projection: ProjectionConfig,
    pub classifier: Loss,
    /// Classifier regularization; `None` uses `1e-3 * n`.
    pub classifier_reg: Option<f64>,
    /// Resampling weights are `exp(-(psi - min psi) / temperature)`.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            n_candidates: 400,
            trans_std: 2.0,
            scale_std: 0.01,
            buffer_size: 50,
            n_background: 48,
            shift_magnitudes: vec![5.0, 7.0, 9.0, 11.0, 13.0, 15.0],
            relearn_interval: 10,
            feature_mode: FeatureMode::Hog,
            solver: SolverConfig::default(),
            projection: ProjectionConfig::default(),
            classifier: Loss::Ridge,
            classifier_reg: None,
            temperature: DEFAULT_TEMPERATURE,
            seed: 0,
        }
    }
}

pub const DEFAULT_TEMPERATURE: f64 = 0.01;

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_candidates < 2 {
            return Err(Error::param("n_candidates", "must be >= 2"));
        }
        if !(self.trans_std >= 0.0) || !self.trans_std.is_finite() {
            return Err(Error::param("trans_std", "must be a finite value >= 0"));
        }
        if !(self.scale_std >= 0.0) || !self.scale_std.is_finite() {
            return Err(Error::param("scale_std", "must be a finite value >= 0"));
        }
        if self.buffer_size == 0 {
            return Err(Error::param("buffer_size", "must be >= 1"));
        }
        if self.shift_magnitudes.is_empty() {
            return Err(Error::param("shift_magnitudes", "must not be empty"));
        }
        if self.shift_magnitudes.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(Error::param("shift_magnitudes", "every shift must be a finite value > 0"));
        }
        if self.n_background != 8 * self.shift_magnitudes.len() {
            return Err(Error::param(
                "n_background",
                format!(
                    "must equal 8 x {} shift magnitudes = {}",
                    self.shift_magnitudes.len(),
                    8 * self.shift_magnitudes.len()
                ),
            ));
        }
        if self.relearn_interval == 0 {
            return Err(Error::param("relearn_interval", "must be >= 1"));
        }
        if let Some(reg) = self.classifier_reg {
            if !(reg > 0.0) || !reg.is_finite() {
                return Err(Error::param("classifier_reg", "must be a finite value > 0"));
            }
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::param("temperature", "must be a finite value > 0"));
        }
        self.solver.validate()?;
        self.projection.validate()
    }
}

/// Recent target features; the initial target is pinned and never evicted.
#[derive(Debug, Clone)]
pub struct TargetBuffer {
    capacity: usize,
    entries: Vec<(Vector, usize)>,
}

impl TargetBuffer {
    pub fn new(initial: Vector, frame_idx: usize, capacity: usize) -> Self {
        Self { capacity: capacity.max(1), entries: vec![(initial, frame_idx)] }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn pinned(&self) -> &(Vector, usize) {
        &self.entries[0]
    }

    pub fn entries(&self) -> &[(Vector, usize)] {
        &self.entries
    }

    /// Append the latest target, evicting the oldest non-pinned entry when
    /// over capacity.
    pub fn push(&mut self, feature: Vector, frame_idx: usize) {
        self.entries.push((feature, frame_idx));
        if self.entries.len() > self.capacity {
            self.entries.remove(1);
        }
    }
}

/// `update_buffer` in functional form.
pub fn update_buffer(mut buf: TargetBuffer, feature: Vector, frame_idx: usize) -> TargetBuffer {
    buf.push(feature, frame_idx);
    buf
}

/// Compass offsets N, NE, E, SE, S, SW, W, NW (y grows downward).
const DIRECTIONS: [(f64, f64); 8] =
    [(0.0, -1.0), (1.0, -1.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (-1.0, 1.0), (-1.0, 0.0), (-1.0, -1.0)];

/// Boxes shifted around the target, direction-major. A box that leaves the
/// frame entirely is pulled back onto the border.
pub fn background_boxes(frame: &Frame, target: &BoundingBox, shifts: &[f64]) -> Vec<BoundingBox> {
    let (fw, fh) = (frame.width(), frame.height());
    let mut out = Vec::with_capacity(8 * shifts.len());
    for (dx, dy) in DIRECTIONS {
        for &m in shifts {
            let b = target.translated(dx * m, dy * m);
            out.push(if b.frame_overlap(fw, fh) > 0.0 { b } else { b.clamp_into(fw, fh) });
        }
    }
    out
}

pub fn collect_background(frame: &Frame, target: &BoundingBox, cfg: &TrackerConfig) -> Result<Vec<Vector>> {
    background_boxes(frame, target, &cfg.shift_magnitudes)
        .iter()
        .map(|b| extract(frame, b, cfg.feature_mode))
        .collect()
}

/// `exp(-(psi - min psi) / temperature)`; non-finite scores get weight 0.
pub fn resampling_weights(psi: &[f64], temperature: f64) -> Vec<f64> {
    let min = psi.iter().copied().filter(|p| p.is_finite()).fold(f64::INFINITY, f64::min);
    psi.iter()
        .map(|&p| if p.is_finite() { (-(p - min) / temperature).exp() } else { 0.0 })
        .collect()
}

/// Multinomial resampling of `parents` by `weights` followed by Gaussian
/// perturbation. All-zero weights fall back to uniform resampling.
pub fn sample_candidates(
    parents: &[MotionState],
    weights: &[f64],
    cfg: &TrackerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<MotionState>> {
    if parents.is_empty() {
        return Err(Error::input("no parent states to sample from"));
    }
    if weights.len() != parents.len() {
        return Err(Error::input(format!("{} weights for {} parents", weights.len(), parents.len())));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::input("resampling weights must be finite and non-negative"));
    }
    let index = WeightedIndex::new(weights).ok();
    let trans = Normal::new(0.0, cfg.trans_std).map_err(|e| Error::param("trans_std", e.to_string()))?;
    let scale = Normal::new(0.0, cfg.scale_std).map_err(|e| Error::param("scale_std", e.to_string()))?;
    Ok((0..cfg.n_candidates)
        .map(|_| {
            let k = match &index {
                Some(ix) => ix.sample(rng),
                None => rng.random_range(0..parents.len()),
            };
            let p = parents[k];
            MotionState {
                x: p.x + trans.sample(rng),
                y: p.y + trans.sample(rng),
                sigma: (p.sigma + scale.sample(rng)).clamp(SIGMA_RANGE.0, SIGMA_RANGE.1),
            }
        })
        .collect())
}

/// `psi_i = phi_i / ||phi||_2 + varphi_i / ||varphi||_2` over the finite
/// entries; a zero norm drops its term and failed candidates score `+inf`.
pub fn fuse_scores(rep: &[f64], disc: &[f64]) -> Result<Vec<f64>> {
    if rep.len() != disc.len() {
        return Err(Error::input(format!("{} representation errors but {} discrimination errors", rep.len(), disc.len())));
    }
    let ok: Vec<bool> = rep.iter().zip(disc).map(|(a, b)| a.is_finite() && b.is_finite()).collect();
    let norm = |v: &[f64]| v.iter().zip(&ok).filter(|(_, &k)| k).map(|(x, _)| x * x).sum::<f64>().sqrt();
    let (nr, nd) = (norm(rep), norm(disc));
    Ok((0..rep.len())
        .map(|i| {
            if !ok[i] {
                return f64::INFINITY;
            }
            let a = if nr > 0.0 { rep[i] / nr } else { 0.0 };
            let b = if nd > 0.0 { disc[i] / nd } else { 0.0 };
            a + b
        })
        .collect())
}

/// Per-candidate representation and discrimination errors.
pub fn candidate_errors(
    feature: &Vector,
    model: &SubspaceModel,
    clf: &LinearClassifier,
    proj: &ProjectionConfig,
) -> Result<(f64, f64)> {
    let emb = project_candidate(feature, model, proj)?;
    Ok((emb.rep_error, classifier::discrimination_error(clf, &emb.z)?))
}

/// Fused scores of featurized candidates; `None` marks candidates whose
/// region could not be extracted.
pub fn score_candidates(
    features: &[Option<Vector>],
    model: &SubspaceModel,
    clf: &LinearClassifier,
    proj: &ProjectionConfig,
) -> Result<Vec<f64>> {
    if features.len() < 2 {
        return Err(Error::input("scoring needs at least two candidates"));
    }
    if model.dim != clf.dim() {
        return Err(Error::input(format!("model has {} dimensions, classifier {}", model.dim, clf.dim())));
    }
    let errs: Vec<(f64, f64)> = features
        .par_iter()
        .map(|f| match f {
            Some(f) => candidate_errors(f, model, clf, proj).unwrap_or((f64::INFINITY, f64::INFINITY)),
            None => (f64::INFINITY, f64::INFINITY),
        })
        .collect();
    let (rep, disc): (Vec<f64>, Vec<f64>) = errs.into_iter().unzip();
    fuse_scores(&rep, &disc)
}

/// Index of the smallest finite score, lowest index on ties.
pub fn localize(psi: &[f64]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, &p) in psi.iter().enumerate() {
        if p.is_finite() && best.map_or(true, |b| p < psi[b]) {
            best = Some(i);
        }
    }
    best.ok_or(Error::LocalizationFailure)
}

/// A learned appearance model and its classifier.
#[derive(Debug, Clone)]
pub struct Appearance {
    pub model: SubspaceModel,
    pub classifier: LinearClassifier,
}

/// Learn the subspace and train the classifier on its robust embeddings.
pub fn learn_appearance(positives: &[Vector], negatives: &[Vector], cfg: &TrackerConfig) -> Result<Appearance> {
    let train = TrainingSet::from_samples(positives, negatives)?;
    let model = learn_embedding(&train, &cfg.solver)?;
    let embeddings: Vec<Vector> = positives
        .par_iter()
        .chain(negatives.par_iter())
        .map(|x| project_candidate(x, &model, &cfg.projection).map(|e| e.z))
        .collect::<Result<_>>()?;
    let z = Matrix::from_columns(&embeddings);
    let labels: Vec<f64> = (0..embeddings.len()).map(|i| if i < positives.len() { 1.0 } else { 0.0 }).collect();
    let reg = cfg.classifier_reg.unwrap_or_else(|| classifier::default_reg(labels.len()));
    let classifier = classifier::train_with_loss(&z, &labels, reg, cfg.classifier)?;
    Ok(Appearance { model, classifier })
}

/// What happened on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub bbox: BoundingBox,
    /// Fused score of the chosen candidate; `None` on frame 0 and on
    /// localization failures.
    pub psi: Option<f64>,
    pub failed: bool,
    /// Whether the appearance model was re-learned after this frame.
    pub relearned: bool,
}

/// Streaming tracker: construct on the first frame, then feed frames in
/// order.
pub struct Tracker {
    cfg: TrackerConfig,
    pool: rayon::ThreadPool,
    rng: ChaCha8Rng,
    base: (f64, f64),
    appearance: Appearance,
    buffer: TargetBuffer,
    /// Jittered copies of the initial target filling the positive set until
    /// the buffer is full.
    filler: Vec<Vector>,
    background: Vec<Vector>,
    particles: Vec<MotionState>,
    weights: Vec<f64>,
    last: BoundingBox,
    frames_seen: usize,
    relearn_count: usize,
    relearn_failures: usize,
}

impl Tracker {
    /// `workers` sets the scoring thread count; 0 uses available parallelism.
    pub fn new(first: &Frame, init: BoundingBox, cfg: TrackerConfig, workers: usize) -> Result<Self> {
        cfg.validate()?;
        BoundingBox::new(init.x, init.y, init.w, init.h)?;
        if init.frame_overlap(first.width(), first.height()) <= 0.0 {
            return Err(Error::OutOfFrame {
                x: init.x,
                y: init.y,
                w: init.w,
                h: init.h,
                frame_w: first.width(),
                frame_h: first.height(),
            });
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::param("workers", e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

        let target = extract(first, &init, cfg.feature_mode)?;
        let jitter: Vec<BoundingBox> = (1..cfg.buffer_size)
            .map(|_| init.translated(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)))
            .collect();
        let (filler, background) = pool.install(|| -> Result<_> {
            let filler = jitter.par_iter().map(|b| extract(first, b, cfg.feature_mode)).collect::<Result<Vec<_>>>()?;
            let boxes = background_boxes(first, &init, &cfg.shift_magnitudes);
            let background =
                boxes.par_iter().map(|b| extract(first, b, cfg.feature_mode)).collect::<Result<Vec<_>>>()?;
            Ok((filler, background))
        })?;
        let buffer = TargetBuffer::new(target, first.index, cfg.buffer_size);
        let positives = positive_set(&buffer, &filler);
        let appearance = pool.install(|| learn_appearance(&positives, &background, &cfg))?;

        let (cx, cy) = init.center();
        Ok(Self {
            pool,
            rng,
            base: (init.w, init.h),
            appearance,
            buffer,
            filler,
            background,
            particles: vec![MotionState { x: cx, y: cy, sigma: 1.0 }],
            weights: vec![1.0],
            last: init,
            frames_seen: 1,
            relearn_count: 1,
            relearn_failures: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn appearance(&self) -> &Appearance {
        &self.appearance
    }

    pub fn buffer(&self) -> &TargetBuffer {
        &self.buffer
    }

    /// Number of appearance models learned so far, the initial one included.
    pub fn relearn_count(&self) -> usize {
        self.relearn_count
    }

    /// Re-learn attempts that kept the previous model.
    pub fn relearn_failures(&self) -> usize {
        self.relearn_failures
    }

    /// Track the next frame.
    pub fn step(&mut self, frame: &Frame) -> Result<FrameOutcome> {
        let cfg = &self.cfg;
        let states = sample_candidates(&self.particles, &self.weights, cfg, &mut self.rng)?;
        let (base_w, base_h) = self.base;
        let boxes: Vec<BoundingBox> = states.iter().map(|s| s.to_box(base_w, base_h)).collect();
        let appearance = &self.appearance;
        let scored = self.pool.install(|| {
            let features: Vec<Option<Vector>> =
                boxes.par_iter().map(|b| extract(frame, b, cfg.feature_mode).ok()).collect();
            score_candidates(&features, &appearance.model, &appearance.classifier, &cfg.projection)
                .map(|psi| (features, psi))
        });
        let (mut features, psi) = scored?;

        let outcome = match localize(&psi) {
            Ok(best) => {
                let feature = features[best].take().expect("finite score implies a feature");
                let chosen = boxes[best];
                self.buffer.push(feature, frame.index);
                let bg = self.pool.install(|| collect_background(frame, &chosen, cfg));
                if let Ok(bg) = bg {
                    self.background = bg;
                }
                self.weights = resampling_weights(&psi, cfg.temperature);
                self.particles = states;
                self.last = chosen;
                FrameOutcome { bbox: chosen, psi: Some(psi[best]), failed: false, relearned: false }
            }
            Err(Error::LocalizationFailure) => {
                FrameOutcome { bbox: self.last, psi: None, failed: true, relearned: false }
            }
            Err(e) => return Err(e),
        };

        let frame_no = self.frames_seen;
        self.frames_seen += 1;
        let mut outcome = outcome;
        if frame_no % self.cfg.relearn_interval == 0 {
            outcome.relearned = self.relearn();
        }
        Ok(outcome)
    }

    fn relearn(&mut self) -> bool {
        let positives = positive_set(&self.buffer, &self.filler);
        let (background, cfg) = (&self.background, &self.cfg);
        match self.pool.install(|| learn_appearance(&positives, background, cfg)) {
            Ok(a) => {
                self.appearance = a;
                self.relearn_count += 1;
                true
            }
            Err(_) => {
                self.relearn_failures += 1;
                false
            }
        }
    }
}

fn positive_set(buffer: &TargetBuffer, filler: &[Vector]) -> Vec<Vector> {
    let mut out: Vec<Vector> = buffer.entries().iter().map(|(f, _)| f.clone()).collect();
    let missing = buffer.capacity().saturating_sub(out.len());
    out.extend(filler.iter().take(missing).cloned());
    out
}

/// Result of a whole-sequence run.
#[derive(Debug, Clone)]
pub struct TrackResult {
    pub boxes: Vec<BoundingBox>,
    pub outcomes: Vec<FrameOutcome>,
    pub failed_frames: Vec<usize>,
    pub relearn_count: usize,
    pub relearn_failures: usize,
}

impl TrackResult {
    /// Mean fused score over successfully localized frames.
    pub fn mean_psi(&self) -> Option<f64> {
        let v: Vec<f64> = self.outcomes.iter().filter_map(|o| o.psi).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Track `frames` from `init`, which is the output for frame 0.
pub fn track_sequence(frames: &[Frame], init: BoundingBox, cfg: &TrackerConfig, workers: usize) -> Result<TrackResult> {
    let first = frames.first().ok_or_else(|| Error::input("no frames to track"))?;
    let mut tracker = Tracker::new(first, init, cfg.clone(), workers)?;
    let mut outcomes = vec![FrameOutcome { bbox: init, psi: None, failed: false, relearned: true }];
    for frame in &frames[1..] {
        outcomes.push(tracker.step(frame)?);
    }
    Ok(TrackResult {
        boxes: outcomes.iter().map(|o| o.bbox).collect(),
        failed_frames: outcomes.iter().enumerate().filter(|(_, o)| o.failed).map(|(i, _)| i).collect(),
        relearn_count: tracker.relearn_count(),
        relearn_failures: tracker.relearn_failures(),
        outcomes,
    })
}
