//! Linear classifier on subspace embeddings.
//!
//! Targets are labelled 1 and background 0, so `|pi(z) - 1|` reads as the
//! distance from a confident target response.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Loss {
    /// Closed-form regularized least squares with an unpenalized bias.
    #[default]
    Ridge,
    /// L2-regularized hinge loss, solved by cyclic dual coordinate descent.
    /// Responses are rescaled so a margin-1 target scores 1 and a margin-1
    /// background scores 0.
    Hinge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub weights: Vector,
    pub bias: f64,
    pub reg: f64,
}

/// Default regularization weight for `n` training samples.
pub fn default_reg(n: usize) -> f64 {
    1e-3 * n as f64
}

fn check_training(z: &Matrix, labels: &[f64], reg: f64) -> Result<(usize, usize)> {
    if !(reg > 0.0) || !reg.is_finite() {
        return Err(Error::param("reg", format!("must be a finite value > 0, got {reg}")));
    }
    if z.ncols() != labels.len() {
        return Err(Error::input(format!(
            "{} embeddings but {} labels",
            z.ncols(),
            labels.len()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("embeddings have non-finite entries"));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidTrainingSet(format!("label {bad} is not 0 or 1")));
    }
    let pos = labels.iter().filter(|&&y| y == 1.0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidTrainingSet(format!(
            "both classes are required, got {pos} target and {neg} background"
        )));
    }
    Ok((pos, neg))
}

/// Minimize `sum_i (w^T z_i + b - y_i)^2 + reg ||w||^2` over the columns of `z`.
pub fn train_classifier(z: &Matrix, labels: &[f64], reg: f64) -> Result<LinearClassifier> {
    train_with_loss(z, labels, reg, Loss::Ridge)
}

pub fn train_with_loss(z: &Matrix, labels: &[f64], reg: f64, loss: Loss) -> Result<LinearClassifier> {
    check_training(z, labels, reg)?;
    let n = labels.len() as f64;
    let z_mean: Vector = z.column_mean();
    let mut zc = z.clone();
    for mut col in zc.column_iter_mut() {
        col -= &z_mean;
    }
    let spread = zc.amax();
    if spread <= 1e-12 * z_mean.amax().max(1.0) {
        return Err(Error::InvalidTrainingSet(
            "all embeddings are identical; the classes cannot be separated".into(),
        ));
    }
    match loss {
        Loss::Ridge => {
            let y_mean = labels.iter().sum::<f64>() / n;
            let yc = Vector::from_iterator(labels.len(), labels.iter().map(|y| y - y_mean));
            let d = z.nrows();
            let gram = &zc * zc.transpose() + Matrix::identity(d, d) * reg;
            let chol = Cholesky::new(gram)
                .ok_or_else(|| Error::InvalidTrainingSet("normal equations are singular".into()))?;
            let weights = chol.solve(&(&zc * yc));
            let bias = y_mean - weights.dot(&z_mean);
            Ok(LinearClassifier { weights, bias, reg })
        }
        Loss::Hinge => Ok(train_hinge(z, labels, reg)),
    }
}

/// Dual coordinate descent for `reg/2 ||w||^2 + sum_i max(0, 1 - s_i (w^T z_i + b))`
/// with `s_i = 2 y_i - 1`. The bias is an extra constant feature.
fn train_hinge(z: &Matrix, labels: &[f64], reg: f64) -> LinearClassifier {
    let (d, n) = (z.nrows(), z.ncols());
    let c = 1.0 / reg;
    let s: Vec<f64> = labels.iter().map(|y| 2.0 * y - 1.0).collect();
    let norms: Vec<f64> = (0..n).map(|i| z.column(i).norm_squared() + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = Vector::zeros(d);
    let mut b = 0.0;
    for _ in 0..1000 {
        let mut max_step: f64 = 0.0;
        for i in 0..n {
            let margin = s[i] * (w.dot(&z.column(i)) + b);
            let next = (alpha[i] - (margin - 1.0) / norms[i]).clamp(0.0, c);
            let delta = next - alpha[i];
            if delta != 0.0 {
                alpha[i] = next;
                w.axpy(delta * s[i], &z.column(i), 1.0);
                b += delta * s[i];
                max_step = max_step.max(delta.abs());
            }
        }
        if max_step < 1e-10 {
            break;
        }
    }
    // Map the decision value f onto (f + 1) / 2.
    LinearClassifier { weights: w * 0.5, bias: 0.5 * (b + 1.0), reg }
}

impl LinearClassifier {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

/// `pi(z) = w^T z + b`.
pub fn predict(clf: &LinearClassifier, z: &Vector) -> Result<f64> {
    if z.len() != clf.dim() {
        return Err(Error::input(format!(
            "embedding has {} coordinates, classifier expects {}",
            z.len(),
            clf.dim()
        )));
    }
    Ok(clf.weights.dot(z) + clf.bias)
}

/// `|pi(z) - 1|`.
pub fn discrimination_error(clf: &LinearClassifier, z: &Vector) -> Result<f64> {
    Ok((predict(clf, z)? - 1.0).abs())
}
