//! The discriminative subspace learner.
//!
//! Maximizing the empirical HSIC between the embedding `P^T X` and the labels
//! under `P^T P = I` is supervised PCA: the top eigenvectors of `X L X^T`.
//! Factoring the label kernel as `L = Q^T Q` turns this into the left
//! singular vectors of `A = X Q^T`, and replacing the fixed dimension with a
//! nuclear-norm penalty on `A` lets the dimension fall out of the rank of the
//! minimizer. A sparse error `E` absorbs occlusions and outliers:
//!
//! ```text
//! min ||A||_* + λ||E1||_1 + μ/2 ||A - (X - E2) Q^T||_F^2 + μ/2 ||E1 - E2||_F^2
//! ```
//!
//! solved by exact block minimization over `A`, `E1` and `E2` in turn.

use crate::error::{Error, Result};
use crate::hsic::{center_samples, label_kernel, KernelMatrix, Label, LabelMatrix};
use crate::numerics::{
    l1_norm, numerical_rank, psd_factor, shrink_singular_values, spectral_norm, svd,
    symmetric_eigen, Matrix, Shrink, Vector, RANK_REL_TOL,
};

/// Labelled solver input; columns of `features` are samples.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    features: Matrix,
    labels: LabelMatrix,
    n_pos: usize,
    n_neg: usize,
}

impl TrainingSet {
    pub fn new(features: Matrix, labels: LabelMatrix) -> Result<Self> {
        if features.ncols() != labels.len() {
            return Err(Error::InvalidTrainingSet(format!(
                "{} samples but {} labels",
                features.ncols(),
                labels.len()
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidTrainingSet("non-finite feature values".into()));
        }
        let n_pos = labels.count(Label::Target);
        let n_neg = labels.count(Label::Background);
        if n_pos == 0 || n_neg == 0 {
            return Err(Error::InvalidTrainingSet(format!(
                "need both classes, got {n_pos} target and {n_neg} background samples"
            )));
        }
        Ok(Self {
            features,
            labels,
            n_pos,
            n_neg,
        })
    }

    /// Stacks `positives` then `negatives` as columns.
    pub fn from_samples(positives: &[Vector], negatives: &[Vector]) -> Result<Self> {
        let all: Vec<&Vector> = positives.iter().chain(negatives).collect();
        let Some(first) = all.first() else {
            return Err(Error::InvalidTrainingSet("no samples".into()));
        };
        let m = first.len();
        if all.iter().any(|v| v.len() != m) {
            return Err(Error::InvalidTrainingSet("samples differ in length".into()));
        }
        let features = Matrix::from_fn(m, all.len(), |r, c| all[c][r]);
        Self::new(features, LabelMatrix::from_counts(positives.len(), negatives.len()))
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &LabelMatrix {
        &self.labels
    }

    pub fn n_pos(&self) -> usize {
        self.n_pos
    }

    pub fn n_neg(&self) -> usize {
        self.n_neg
    }

    pub fn len(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub const DEFAULT_LAMBDA: f64 = 1e-4;

/// How the configured sparse-error weight maps onto the weight the solver
/// actually uses for an `m x n` problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaScale {
    /// Use `lambda` as given.
    Absolute,
    /// `(lambda / 1e-4) / sqrt(max(m, n))`: the default `1e-4` maps onto the
    /// classical robust-PCA weight and other values scale it proportionally.
    RobustPca,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Sparse-error weight before [`LambdaScale`] is applied.
    pub lambda: f64,
    pub lambda_scale: LambdaScale,
    /// Fixed quadratic-penalty weight. `None` derives it from the data as
    /// `mu_factor / ||X Q^T||_2`.
    pub mu: Option<f64>,
    pub mu_factor: f64,
    /// Stop once consecutive objective values differ by less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Gaussian bandwidth of the label kernel.
    pub label_sigma: f64,
    /// With `false` the sparse term is frozen at zero and only the low-rank
    /// step runs.
    pub robust: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            lambda_scale: LambdaScale::RobustPca,
            mu: None,
            mu_factor: 10.0,
            tol: 1e-8,
            max_iter: 500,
            label_sigma: 1.0,
            robust: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::param("lambda", "must be a finite value > 0"));
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0) || !mu.is_finite() {
                return Err(Error::param("mu", "must be a finite value > 0"));
            }
        }
        if !(self.mu_factor > 0.0) || !self.mu_factor.is_finite() {
            return Err(Error::param("mu_factor", "must be a finite value > 0"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", "must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", "must be >= 1"));
        }
        if !(self.label_sigma > 0.0) || !self.label_sigma.is_finite() {
            return Err(Error::param("label_sigma", "must be a finite value > 0"));
        }
        Ok(())
    }

    /// The sparse-error weight used on an `m x n` problem.
    pub fn effective_lambda(&self, m: usize, n: usize) -> f64 {
        match self.lambda_scale {
            LambdaScale::Absolute => self.lambda,
            LambdaScale::RobustPca => {
                (self.lambda / DEFAULT_LAMBDA) / (m.max(n) as f64).sqrt()
            }
        }
    }
}

/// The learned appearance model.
#[derive(Debug, Clone)]
pub struct SubspaceModel {
    /// `m x d`, orthonormal columns.
    pub basis: Matrix,
    pub dim: usize,
    /// Training mean subtracted before embedding.
    pub mean: Vector,
    /// Final sparse error `E1`, `m x n`.
    pub error: Matrix,
    /// Objective after initialization and after every iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub mu: f64,
    pub lambda: f64,
    /// All singular values of the final low-rank matrix.
    pub singular_values: Vector,
}

impl SubspaceModel {
    /// A model with a given basis and mean and no training history.
    /// The basis columns must be orthonormal within 1e-8.
    pub fn from_basis(basis: Matrix, mean: Vector) -> Result<Self> {
        if basis.nrows() != mean.len() {
            return Err(Error::input(format!(
                "basis has {} rows but mean has {} entries",
                basis.nrows(),
                mean.len()
            )));
        }
        let d = basis.ncols();
        if (basis.tr_mul(&basis) - Matrix::identity(d, d)).amax() > 1e-8 {
            return Err(Error::input("basis columns are not orthonormal"));
        }
        Ok(Self {
            dim: d,
            error: Matrix::zeros(basis.nrows(), 0),
            basis,
            mean,
            objective_trace: Vec::new(),
            converged: true,
            iterations: 0,
            mu: 0.0,
            lambda: 0.0,
            singular_values: Vector::zeros(d),
        })
    }

    pub fn feature_len(&self) -> usize {
        self.basis.nrows()
    }

    /// Plain orthogonal embedding `P^T (x - mean)`.
    pub fn embed(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.feature_len() {
            return Err(Error::input(format!(
                "sample has {} features, model expects {}",
                x.len(),
                self.feature_len()
            )));
        }
        Ok(self.basis.tr_mul(&(x - &self.mean)))
    }
}

/// Top-`d` eigenvectors of `X L X^T`, the maximizer of
/// `tr(P^T X L X^T P)` over column-orthonormal `P`.
pub fn supervised_pca(x: &Matrix, l: &KernelMatrix, d: usize) -> Result<Matrix> {
    let (m, n) = x.shape();
    if l.size() != n {
        return Err(Error::input(format!(
            "label kernel is {0}x{0} but there are {n} samples",
            l.size()
        )));
    }
    if d == 0 || d > m.min(n) {
        return Err(Error::param(
            "d",
            format!("must be in 1..={}, got {d}", m.min(n)),
        ));
    }
    let s = x * l.as_matrix() * x.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let (_, vectors) = symmetric_eigen(&s)?;
    let mut p = vectors.columns(0, d).into_owned();
    fix_signs(&mut p);
    Ok(p)
}

/// Low-rank step: `A = U shrink(1/mu, S) V^T` of `(X - E2) Q^T`.
pub fn step_a(x: &Matrix, e2: &Matrix, q: &Matrix, mu: f64) -> Result<Matrix> {
    check_mu(mu)?;
    Ok(shrink_singular_values(1.0 / mu, &((x - e2) * q.transpose()))?.0)
}

/// Sparse step: `E1 = soft_threshold(lambda/mu, E2)`.
pub fn step_e1(e2: &Matrix, lambda: f64, mu: f64) -> Result<Matrix> {
    check_mu(mu)?;
    if !(lambda > 0.0) {
        return Err(Error::param("lambda", "must be > 0"));
    }
    Ok(e2.shrink(lambda / mu))
}

/// Closed form of the coupling step,
/// `argmin_E2 ||A - (X - E2) Q^T||_F^2 + ||E1 - E2||_F^2`.
pub fn step_e2(a: &Matrix, x: &Matrix, q: &Matrix, e1: &Matrix) -> Result<Matrix> {
    step_e2_with(a, x, q, e1, E2Formula::Stationary)
}

/// [`step_e2`] with an explicit choice of closed form.
pub fn step_e2_with(a: &Matrix, x: &Matrix, q: &Matrix, e1: &Matrix, formula: E2Formula) -> Result<Matrix> {
    CouplingSolve::new(q)?.solve(a, x, e1, formula)
}

/// Which closed form the coupling step uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum E2Formula {
    /// `(X Q^T Q - A Q + E1)(Q^T Q + I)^{-1}`, the zero-gradient point.
    Stationary,
    /// `(A Q - X Q^T Q + E1)(Q^T Q + I)^{-1}`. The first two terms have the
    /// wrong sign; kept only so diagnostics can show it fails.
    SignFlipped,
}

/// Caches `Q^T Q` and the factorization of `Q^T Q + I` across iterations.
pub(crate) struct CouplingSolve {
    q: Matrix,
    qtq: Matrix,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl CouplingSolve {
    pub(crate) fn new(q: &Matrix) -> Result<Self> {
        if q.nrows() != q.ncols() {
            return Err(Error::input("Q must be square"));
        }
        let n = q.ncols();
        let qtq = q.transpose() * q;
        let sys = &qtq + Matrix::identity(n, n);
        let sys = (&sys + sys.transpose()) * 0.5;
        let chol = nalgebra::Cholesky::new(sys)
            .ok_or_else(|| Error::input("Q^T Q + I is not positive definite"))?;
        Ok(Self {
            q: q.clone(),
            qtq,
            chol,
        })
    }

    pub(crate) fn solve(
        &self,
        a: &Matrix,
        x: &Matrix,
        e1: &Matrix,
        formula: E2Formula,
    ) -> Result<Matrix> {
        let n = self.q.ncols();
        if x.ncols() != n || a.shape() != x.shape() || e1.shape() != x.shape() {
            return Err(Error::input("step_e2 shape mismatch"));
        }
        let data = x * &self.qtq - a * &self.q;
        let rhs = match formula {
            E2Formula::Stationary => data + e1,
            E2Formula::SignFlipped => e1 - data,
        };
        // E2 (Q^T Q + I) = rhs  <=>  (Q^T Q + I) E2^T = rhs^T.
        Ok(self.chol.solve(&rhs.transpose()).transpose())
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::param("mu", format!("must be a finite value > 0, got {mu}")));
    }
    Ok(())
}

/// Penalized objective at the current iterate.
#[allow(clippy::too_many_arguments)]
pub fn objective(
    a: &Matrix,
    e1: &Matrix,
    e2: &Matrix,
    x: &Matrix,
    q: &Matrix,
    lambda: f64,
    mu: f64,
) -> Result<f64> {
    let nuclear = crate::numerics::nuclear_norm(a)?;
    Ok(penalized_objective(nuclear, a, e1, e2, x, q, lambda, mu))
}

#[allow(clippy::too_many_arguments)]
fn penalized_objective(
    nuclear: f64,
    a: &Matrix,
    e1: &Matrix,
    e2: &Matrix,
    x: &Matrix,
    q: &Matrix,
    lambda: f64,
    mu: f64,
) -> f64 {
    let fit = (a - (x - e2) * q.transpose()).norm_squared();
    let split = (e1 - e2).norm_squared();
    nuclear + lambda * l1_norm(e1) + 0.5 * mu * (fit + split)
}

/// Per-run knobs that are not part of the persisted configuration.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub e2_formula: E2Formula,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            e2_formula: E2Formula::Stationary,
        }
    }
}

/// Learn the subspace from a labelled training set using the centered
/// Gaussian label kernel.
pub fn learn_embedding(train: &TrainingSet, cfg: &SolverConfig) -> Result<SubspaceModel> {
    cfg.validate()?;
    let l = label_kernel(train.labels(), cfg.label_sigma)?;
    learn_embedding_with_kernel(train.features(), &l, cfg, SolveOptions::default())
}

/// Learn the subspace against an explicit label kernel.
///
/// `x` is uncentered; it is centered here. The kernel is used as given, so it
/// should already be double-centered; `KernelMatrix::centered_identity`
/// reduces the problem to robust PCA.
///
/// The factor `Q` of the kernel is scaled to unit spectral norm. This leaves
/// the maximizer of `tr(P^T X L X^T P)` unchanged, but without it a kernel
/// whose top eigenvalue exceeds `mu_factor` lets the coupling term absorb all
/// of `X Q^T` and the low-rank part collapses to zero.
pub fn learn_embedding_with_kernel(
    x: &Matrix,
    l: &KernelMatrix,
    cfg: &SolverConfig,
    opts: SolveOptions,
) -> Result<SubspaceModel> {
    cfg.validate()?;
    let (m, n) = x.shape();
    if m < 2 || n < 2 {
        return Err(Error::input(format!("need m >= 2 and n >= 2, got {m}x{n}")));
    }
    if l.size() != n {
        return Err(Error::input(format!(
            "label kernel is {0}x{0} but there are {n} samples",
            l.size()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("training features contain non-finite values"));
    }

    let (xc, mean) = center_samples(x)?;
    let mut q = psd_factor(l.as_matrix())?;
    let q_norm = spectral_norm(&q)?;
    if q_norm == 0.0 {
        return Err(Error::DegenerateSubspace);
    }
    q /= q_norm;
    let xq = &xc * q.transpose();
    let mu = match cfg.mu {
        Some(mu) => mu,
        None => {
            let top = spectral_norm(&xq)?;
            if top == 0.0 {
                return Err(Error::DegenerateSubspace);
            }
            cfg.mu_factor / top
        }
    };
    let lambda = cfg.effective_lambda(m, n);

    let zeros = Matrix::zeros(m, n);
    let mut a;
    let mut e1 = zeros.clone();
    let mut e2 = zeros;
    let mut trace = vec![crate::numerics::nuclear_norm(&xq)?];
    let mut converged = false;
    let mut iterations = 0;

    if cfg.robust {
        let coupling = CouplingSolve::new(&q)?;
        a = xq;
        for _ in 0..cfg.max_iter {
            iterations += 1;
            let (next_a, nuclear) = shrink_singular_values(1.0 / mu, &((&xc - &e2) * q.transpose()))?;
            a = next_a;
            e1 = e2.shrink(lambda / mu);
            e2 = coupling.solve(&a, &xc, &e1, opts.e2_formula)?;
            let obj = penalized_objective(nuclear, &a, &e1, &e2, &xc, &q, lambda, mu);
            let prev = *trace.last().expect("trace starts non-empty");
            trace.push(obj);
            if !obj.is_finite() {
                break;
            }
            if (prev - obj).abs() < cfg.tol {
                converged = true;
                break;
            }
        }
    } else {
        let (next_a, nuclear) = shrink_singular_values(1.0 / mu, &xq)?;
        a = next_a;
        let fit = (&a - &xq).norm_squared();
        trace.push(nuclear + 0.5 * mu * fit);
        iterations = 1;
        converged = true;
    }

    let f = svd(&a)?;
    let dim = numerical_rank(f.singular_values.as_slice(), RANK_REL_TOL);
    if dim == 0 {
        return Err(Error::DegenerateSubspace);
    }
    let mut basis = f.left_vectors.columns(0, dim).into_owned();
    fix_signs(&mut basis);

    Ok(SubspaceModel {
        basis,
        dim,
        mean,
        error: e1,
        objective_trace: trace,
        converged,
        iterations,
        mu,
        lambda,
        singular_values: f.singular_values,
    })
}

/// Make the largest-magnitude entry of every column positive (first one on
/// ties).
pub(crate) fn fix_signs(p: &mut Matrix) {
    for mut col in p.column_iter_mut() {
        let mut best = 0usize;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}
