//! Proximal shrinkage operators and the dense factorizations the solvers
//! share.
//!
//! Everything here is a pure function over `nalgebra` dense matrices.

use faer::Mat;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative tolerance for [`numerical_rank`].
pub const RANK_REL_TOL: f64 = 1e-10;

/// Values that [`soft_threshold`] can act on elementwise.
pub trait Shrink: Sized {
    fn shrink(&self, theta: f64) -> Self;
}

#[inline]
fn shrink_scalar(theta: f64, x: f64) -> f64 {
    let mag = x.abs() - theta;
    if mag > 0.0 {
        mag.copysign(x)
    } else {
        0.0
    }
}

impl Shrink for f64 {
    fn shrink(&self, theta: f64) -> Self {
        shrink_scalar(theta, *self)
    }
}

impl Shrink for Matrix {
    fn shrink(&self, theta: f64) -> Self {
        self.map(|x| shrink_scalar(theta, x))
    }
}

impl Shrink for Vector {
    fn shrink(&self, theta: f64) -> Self {
        self.map(|x| shrink_scalar(theta, x))
    }
}

/// Elementwise `sign(x) * max(0, |x| - theta)`, the proximal operator of
/// `theta * ||.||_1`.
pub fn soft_threshold<T: Shrink>(theta: f64, x: &T) -> Result<T> {
    check_threshold(theta)?;
    Ok(x.shrink(theta))
}

fn check_threshold(theta: f64) -> Result<()> {
    if theta.is_nan() || theta < 0.0 {
        return Err(Error::param("theta", format!("must be >= 0, got {theta}")));
    }
    Ok(())
}

/// Thin singular value decomposition `M = U diag(S) V^T` with `S` sorted
/// in non-increasing order.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// `m x r`, orthonormal columns.
    pub left_vectors: Matrix,
    pub singular_values: Vector,
    /// `n x r`, orthonormal columns.
    pub right_vectors: Matrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.left_vectors.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.right_vectors.transpose()
    }
}

/// Thin SVD; returns `min(m, n)` factors.
pub fn svd(m: &Matrix) -> Result<SvdFactors> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::input("svd of an empty matrix"));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("svd input has non-finite entries"));
    }
    let raw = to_faer(m)
        .thin_svd()
        .map_err(|e| Error::input(format!("svd did not converge: {e:?}")))?;
    let u = from_faer(raw.U());
    let v = from_faer(raw.V());
    let s: Vec<f64> = raw.S().column_vector().iter().copied().collect();

    let r = s.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

    let mut left = Matrix::zeros(m.nrows(), r);
    let mut right = Matrix::zeros(m.ncols(), r);
    let mut values = Vector::zeros(r);
    for (dst, &src) in order.iter().enumerate() {
        left.set_column(dst, &u.column(src));
        right.set_column(dst, &v.column(src));
        values[dst] = s[src].max(0.0);
    }
    Ok(SvdFactors {
        left_vectors: left,
        singular_values: values,
        right_vectors: right,
    })
}

/// `U diag(soft_threshold(theta, S)) V^T`, the proximal operator of
/// `theta * ||.||_*`.
///
/// Columns that are exactly zero are dropped before the decomposition and
/// restored afterwards; kernel factors with clamped eigenvalues produce many
/// of them.
pub fn singular_value_shrinkage(theta: f64, m: &Matrix) -> Result<Matrix> {
    Ok(shrink_singular_values(theta, m)?.0)
}

/// Shrinkage plus the nuclear norm of the result, which the solver needs for
/// its objective and would otherwise cost a second decomposition.
pub(crate) fn shrink_singular_values(theta: f64, m: &Matrix) -> Result<(Matrix, f64)> {
    check_threshold(theta)?;
    let live: Vec<usize> = (0..m.ncols())
        .filter(|&j| m.column(j).iter().any(|&x| x != 0.0))
        .collect();
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    if live.is_empty() {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("svd input has non-finite entries"));
        }
        return Ok((out, 0.0));
    }
    let compact = if live.len() == m.ncols() {
        m.clone()
    } else {
        m.select_columns(live.iter())
    };
    let f = svd(&compact)?;
    let kept: Vec<usize> = (0..f.rank())
        .filter(|&i| f.singular_values[i] > theta)
        .collect();
    if kept.is_empty() {
        return Ok((out, 0.0));
    }
    let mut nuclear = 0.0;
    let mut us = f.left_vectors.select_columns(kept.iter());
    for (j, &i) in kept.iter().enumerate() {
        let s = f.singular_values[i] - theta;
        nuclear += s;
        us.column_mut(j).scale_mut(s);
    }
    let shrunk = us * f.right_vectors.select_columns(kept.iter()).transpose();
    for (src, &dst) in live.iter().enumerate() {
        out.set_column(dst, &shrunk.column(src));
    }
    Ok((out, nuclear))
}

/// Factor a symmetric PSD matrix as `L = Q^T Q` with `Q = Λ^{1/2} V^T`.
///
/// Rows of `Q` follow eigenvalues in non-increasing order. Eigenvalues that
/// are negative within tolerance, or below `n * eps * λ_max`, are clamped to
/// zero so the matching rows of `Q` are exactly zero.
pub fn psd_factor(l: &Matrix) -> Result<Matrix> {
    let n = l.nrows();
    if n == 0 || l.ncols() != n {
        return Err(Error::input(format!(
            "psd_factor needs a non-empty square matrix, got {}x{}",
            l.nrows(),
            l.ncols()
        )));
    }
    if l.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("psd_factor input has non-finite entries"));
    }
    let scale = l.amax().max(1.0);
    let asym = (l - l.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::input(format!(
            "psd_factor input is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let (values, vectors) = symmetric_eigen(l)?;
    let lambda_max = values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let lambda_min = values.min();
    if lambda_min < -1e-6 * lambda_max.max(f64::MIN_POSITIVE) && lambda_min < -1e-10 {
        return Err(Error::NotPsd {
            min_eigenvalue: lambda_min,
        });
    }

    let floor = n as f64 * f64::EPSILON * lambda_max;
    let mut q = Matrix::zeros(n, n);
    for (row, &ev) in values.iter().enumerate() {
        if ev <= floor {
            continue;
        }
        let root = ev.sqrt();
        let v = vectors.column(row);
        for c in 0..n {
            q[(row, c)] = root * v[c];
        }
    }
    Ok(q)
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues in non-increasing
/// order with eigenvectors as matching columns. Only the lower triangle is
/// read.
pub fn symmetric_eigen(s: &Matrix) -> Result<(Vector, Matrix)> {
    let n = s.nrows();
    if n == 0 || s.ncols() != n {
        return Err(Error::input("symmetric_eigen needs a non-empty square matrix"));
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("symmetric_eigen input has non-finite entries"));
    }
    let raw = to_faer(s)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::input(format!("eigendecomposition did not converge: {e:?}")))?;
    let vals: Vec<f64> = raw.S().column_vector().iter().copied().collect();
    let vecs = from_faer(raw.U());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    let values = Vector::from_iterator(n, order.iter().map(|&k| vals[k]));
    let vectors = vecs.select_columns(order.iter());
    Ok((values, vectors))
}

fn to_faer(m: &Matrix) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Number of values strictly greater than `rel_tol * max(values)`.
pub fn numerical_rank(singular_values: &[f64], rel_tol: f64) -> usize {
    let max = singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
    if max <= 0.0 {
        return 0;
    }
    let cut = rel_tol * max;
    singular_values.iter().filter(|&&s| s > cut).count()
}

pub fn nuclear_norm(m: &Matrix) -> Result<f64> {
    if m.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    Ok(svd(m)?.singular_values.sum())
}

pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    if m.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    Ok(svd(m)?.singular_values[0])
}

pub fn l1_norm(m: &Matrix) -> f64 {
    m.iter().map(|x| x.abs()).sum()
}

/// Largest principal angle (radians) between the column spans of two
/// matrices with orthonormal columns.
pub fn max_principal_angle(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::input("principal angle between spaces of different ambient dimension"));
    }
    if a.ncols() == 0 || b.ncols() == 0 {
        return Err(Error::input("principal angle with an empty basis"));
    }
    if a.ncols() != b.ncols() {
        return Ok(std::f64::consts::FRAC_PI_2);
    }
    let cross = a.transpose() * b;
    let s = svd(&cross)?.singular_values;
    let smallest = s.min().clamp(0.0, 1.0);
    // acos loses precision near 1; use the sine of the residual instead.
    let residual = b - a * (a.transpose() * b);
    let sin = svd(&residual)?.singular_values[0].clamp(0.0, 1.0);
    let from_cos = smallest.acos();
    Ok(if from_cos < 1e-2 { sin.asin() } else { from_cos })
}
