//! Robust projection of a candidate onto a learned subspace.
//!
//! The coefficients come from alternating minimization of
//! `1/2 ||c - P z - e||^2 + (1/mu) ||e||_1`; the reported residual is the
//! exact remainder `c - P z` at those coefficients, so large sparse
//! corruptions are charged in full to the representation error.

use crate::embedding::SubspaceModel;
use crate::error::{Error, Result};
use crate::numerics::{soft_threshold, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionConfig {
    /// `mu = mu_factor / ||c - mean||_inf`.
    pub mu_factor: f64,
    /// Stop once `||e||_1` changes by less than this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self { mu_factor: 10.0, tol: 1e-8, max_iter: 200 }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_factor > 0.0) || !self.mu_factor.is_finite() {
            return Err(Error::param("mu_factor", "must be a finite value > 0"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", "must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEmbedding {
    /// Subspace coordinates.
    pub z: Vector,
    /// Residual `c - mean - P z`.
    pub e: Vector,
    /// `||e||_1`.
    pub rep_error: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `1/2 ||c - mean - P z - e||^2 + theta ||e||_1` of the shrunk iterate
    /// after every iteration; non-increasing.
    pub objective_trace: Vec<f64>,
}

pub fn project_candidate(c: &Vector, model: &SubspaceModel, cfg: &ProjectionConfig) -> Result<CandidateEmbedding> {
    cfg.validate()?;
    if c.len() != model.feature_len() {
        return Err(Error::input(format!(
            "candidate has {} features, model expects {}",
            c.len(),
            model.feature_len()
        )));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("candidate has non-finite entries"));
    }
    let p = &model.basis;
    let centered = c - &model.mean;
    let scale = centered.amax();
    if scale == 0.0 {
        return Ok(CandidateEmbedding {
            z: Vector::zeros(p.ncols()),
            e: Vector::zeros(c.len()),
            rep_error: 0.0,
            converged: true,
            iterations: 0,
            objective_trace: Vec::new(),
        });
    }
    let theta = scale / cfg.mu_factor;

    let mut e = Vector::zeros(c.len());
    let mut z = Vector::zeros(p.ncols());
    let mut prev = 0.0;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iter {
        iterations += 1;
        z = p.tr_mul(&(&centered - &e));
        let r = &centered - p * &z;
        e = soft_threshold(theta, &r)?;
        let norm = e.lp_norm(1);
        trace.push(0.5 * (r - &e).norm_squared() + theta * norm);
        if (norm - prev).abs() < cfg.tol {
            converged = true;
            break;
        }
        prev = norm;
    }

    let residual = &centered - p * &z;
    let rep_error = residual.lp_norm(1);
    Ok(CandidateEmbedding { z, e: residual, rep_error, converged, iterations, objective_trace: trace })
}

/// `||e||_1`.
pub fn representation_error(emb: &CandidateEmbedding) -> f64 {
    emb.e.lp_norm(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{svd, Matrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Orthonormal `m x d` basis whose last row is zero, so the last
    /// coordinate is orthogonal to the span.
    fn model(rng: &mut ChaCha8Rng, m: usize, d: usize) -> SubspaceModel {
        let mut g = Matrix::from_fn(m, d, |_, _| rng.random_range(-1.0..1.0));
        g.row_mut(m - 1).fill(0.0);
        let basis = svd(&g).unwrap().left_vectors;
        let mean = Vector::from_fn(m, |_, _| rng.random_range(0.0..1.0));
        SubspaceModel::from_basis(basis, mean).unwrap()
    }

    #[test]
    fn in_subspace_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = model(&mut rng, 30, 3);
        let z0 = Vector::from_vec(vec![0.7, -1.2, 0.4]);
        let c = &m.mean + &m.basis * &z0;
        let emb = project_candidate(&c, &m, &ProjectionConfig::default()).unwrap();
        assert!((&emb.z - &z0).amax() < 1e-8);
        assert!(emb.rep_error < 1e-8);
    }

    #[test]
    fn mean_candidate_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = model(&mut rng, 12, 2);
        let emb = project_candidate(&m.mean.clone(), &m, &ProjectionConfig::default()).unwrap();
        assert!(emb.z.iter().all(|&v| v == 0.0));
        assert!(emb.e.iter().all(|&v| v == 0.0));
        assert_eq!(emb.rep_error, 0.0);
    }

    #[test]
    fn orthogonal_spike_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = model(&mut rng, 30, 3);
        let z0 = Vector::from_vec(vec![0.3, 0.5, -0.2]);
        let mut c = &m.mean + &m.basis * &z0;
        c[29] += 5.0;
        let emb = project_candidate(&c, &m, &ProjectionConfig::default()).unwrap();
        assert!((emb.rep_error - 5.0).abs() < 1e-3);
        assert!((emb.e[29] - 5.0).abs() < 1e-3);
        assert!((&emb.z - &z0).amax() < 1e-8);
    }

    #[test]
    fn residual_invariant_and_monotone_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let m = model(&mut rng, 40, 4);
            let mut c = Vector::from_fn(40, |_, _| rng.random_range(-1.0..1.0));
            for _ in 0..3 {
                let k = rng.random_range(0..40);
                c[k] += rng.random_range(-8.0..8.0);
            }
            let emb = project_candidate(&c, &m, &ProjectionConfig::default()).unwrap();
            let rebuilt = &m.mean + &m.basis * &emb.z + &emb.e;
            assert!((&c - rebuilt).norm() < 1e-6 * c.norm().max(1.0));
            assert_eq!(emb.rep_error, representation_error(&emb));
            for w in emb.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn error_grows_with_dense_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = model(&mut rng, 25, 2);
        let mut dir = Vector::from_fn(25, |_, _| rng.random_range(-1.0..1.0));
        dir -= &m.basis * m.basis.tr_mul(&dir);
        let base = &m.mean + &m.basis * Vector::from_vec(vec![0.4, -0.3]);
        let errs: Vec<f64> = (1..=10)
            .map(|k| {
                let c = &base + &dir * (0.2 * k as f64);
                project_candidate(&c, &m, &ProjectionConfig::default()).unwrap().rep_error
            })
            .collect();
        for w in errs.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn representation_error_examples() {
        let mut emb = CandidateEmbedding {
            z: Vector::zeros(1),
            e: Vector::zeros(3),
            rep_error: 0.0,
            converged: true,
            iterations: 0,
            objective_trace: vec![],
        };
        assert_eq!(representation_error(&emb), 0.0);
        emb.e = Vector::from_vec(vec![1.0, -2.0, 0.0]);
        assert_eq!(representation_error(&emb), 3.0);
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = model(&mut rng, 10, 2);
        assert!(matches!(
            project_candidate(&Vector::zeros(9), &m, &ProjectionConfig::default()),
            Err(Error::InvalidInput(_))
        ));
    }
}
