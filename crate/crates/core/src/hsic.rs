//! Kernel matrices and the empirical Hilbert-Schmidt independence criterion.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Target,
    Background,
}

impl Label {
    /// Canonical two-vector encoding: `[1, 0]` target, `[0, 1]` background.
    pub fn one_hot(self) -> [f64; 2] {
        match self {
            Label::Target => [1.0, 0.0],
            Label::Background => [0.0, 1.0],
        }
    }

    /// Scalar encoding used by the classifier.
    pub fn scalar(self) -> f64 {
        match self {
            Label::Target => 1.0,
            Label::Background => 0.0,
        }
    }
}

/// Sample labels, one per training column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    labels: Vec<Label>,
}

impl LabelMatrix {
    pub fn new(labels: Vec<Label>) -> Self {
        Self { labels }
    }

    /// `n_pos` targets followed by `n_neg` background samples.
    pub fn from_counts(n_pos: usize, n_neg: usize) -> Self {
        let mut labels = vec![Label::Target; n_pos];
        labels.extend(std::iter::repeat(Label::Background).take(n_neg));
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// The `2 x n` one-hot matrix.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(2, self.labels.len(), |r, c| self.labels[c].one_hot()[r])
    }
}

/// A symmetric `n x n` kernel (Gram) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix(Matrix);

impl KernelMatrix {
    /// Wraps `m` after checking it is square and symmetric within 1e-12
    /// (relative to its largest entry).
    pub fn new(m: Matrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::input(format!(
                "kernel matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let tol = 1e-12 * m.amax().max(1.0);
        if (&m - m.transpose()).amax() > tol {
            return Err(Error::input("kernel matrix is not symmetric"));
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n, n))
    }

    /// `H = I - (1/n) 1 1^T`; the double-centered identity kernel. Feeding
    /// it to the solver ignores labels and reduces the problem to robust PCA.
    pub fn centered_identity(n: usize) -> Self {
        Self::identity(n).double_centered()
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// `H K H` with `H = I - (1/n) 1 1^T`.
    pub fn double_centered(&self) -> Self {
        let n = self.size();
        if n == 0 {
            return self.clone();
        }
        let k = &self.0;
        let row_means: Vector = k.column_mean();
        let col_means: Vector = k.row_mean().transpose();
        let grand = k.mean();
        let mut out = Matrix::from_fn(n, n, |i, j| k[(i, j)] - row_means[i] - col_means[j] + grand);
        // Restore exact symmetry lost to rounding.
        out = (&out + out.transpose()) * 0.5;
        Self(out)
    }
}

/// Subtract the per-feature mean across samples (columns are samples).
pub fn center_samples(x: &Matrix) -> Result<(Matrix, Vector)> {
    if x.ncols() == 0 {
        return Err(Error::input("center_samples needs at least one sample"));
    }
    let mean: Vector = x.column_mean();
    let mut xc = x.clone();
    for mut col in xc.column_iter_mut() {
        col -= &mean;
    }
    Ok((xc, mean))
}

/// `L_ij = exp(-||y_i - y_j||^2 / (2 sigma^2))` over one-hot labels.
pub fn gaussian_kernel(labels: &LabelMatrix, sigma: f64) -> Result<KernelMatrix> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::param("sigma", format!("must be > 0, got {sigma}")));
    }
    let ls = labels.labels();
    let off = (-2.0 / (2.0 * sigma * sigma)).exp();
    let n = ls.len();
    Ok(KernelMatrix(Matrix::from_fn(n, n, |i, j| {
        if ls[i] == ls[j] {
            1.0
        } else {
            off
        }
    })))
}

/// Centered label kernel `H L H` as used by the solver.
pub fn label_kernel(labels: &LabelMatrix, sigma: f64) -> Result<KernelMatrix> {
    Ok(gaussian_kernel(labels, sigma)?.double_centered())
}

/// `K = Z^T Z` for samples stored as columns of `z`.
pub fn linear_kernel(z: &Matrix) -> KernelMatrix {
    let k = z.transpose() * z;
    KernelMatrix((&k + k.transpose()) * 0.5)
}

/// `tr(K L) / (n - 1)`.
pub fn empirical_hsic(k: &KernelMatrix, l: &KernelMatrix) -> Result<f64> {
    let n = k.size();
    if l.size() != n {
        return Err(Error::input(format!(
            "kernel sizes differ: {} vs {}",
            n,
            l.size()
        )));
    }
    if n < 2 {
        return Err(Error::input("empirical HSIC needs n >= 2"));
    }
    // tr(KL) = sum_ij K_ij L_ji; summing the elementwise product of K and L^T
    // is symmetric in the two arguments for symmetric inputs.
    let (a, b) = (k.as_matrix(), l.as_matrix());
    let mut tr = 0.0;
    for i in 0..n {
        for j in 0..n {
            tr += a[(i, j)] * b[(j, i)];
        }
    }
    Ok(tr / (n as f64 - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn center_samples_examples() {
        let x = Matrix::from_row_slice(1, 2, &[1.0, 3.0]);
        let (xc, mean) = center_samples(&x).unwrap();
        assert_eq!(xc.as_slice(), &[-1.0, 1.0]);
        assert_eq!(mean.as_slice(), &[2.0]);

        let (xc, mean) = center_samples(&Matrix::zeros(3, 4)).unwrap();
        assert!(xc.iter().all(|&v| v == 0.0) && mean.iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Matrix::from_fn(6, 9, |_, _| rng.random_range(-3.0..3.0));
        let (xc, mean) = center_samples(&x).unwrap();
        assert!(xc.column_mean().amax() < 1e-12);
        let mut back = xc.clone();
        for mut c in back.column_iter_mut() {
            c += &mean;
        }
        assert!((back - x).amax() < 1e-12);

        assert!(center_samples(&Matrix::zeros(2, 0)).is_err());
    }

    #[test]
    fn gaussian_kernel_examples() {
        let y = LabelMatrix::new(vec![Label::Target, Label::Target, Label::Background]);
        let l = gaussian_kernel(&y, 1.0).unwrap();
        let m = l.as_matrix();
        assert_eq!(m[(0, 1)], 1.0);
        assert!((m[(0, 2)] - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert_eq!(m, &m.transpose());
        assert!((0..3).all(|i| m[(i, i)] == 1.0));
        assert!(matches!(
            gaussian_kernel(&y, 0.0),
            Err(Error::InvalidParameter { name: "sigma", .. })
        ));
    }

    #[test]
    fn gaussian_kernel_matches_one_hot_distance() {
        let y = LabelMatrix::from_counts(2, 3);
        let ym = y.to_matrix();
        let sigma = 0.7;
        let l = gaussian_kernel(&y, sigma).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let d2 = (ym.column(i) - ym.column(j)).norm_squared();
                let want = (-d2 / (2.0 * sigma * sigma)).exp();
                assert!((l.as_matrix()[(i, j)] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn linear_kernel_examples() {
        assert_eq!(linear_kernel(&Matrix::identity(2, 2)).into_matrix(), Matrix::identity(2, 2));
        let z = Matrix::from_column_slice(3, 1, &[1.0, 2.0, 2.0]);
        assert_eq!(linear_kernel(&z).as_matrix()[(0, 0)], 9.0);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let z = Matrix::from_fn(3, 7, |_, _| rng.random_range(-1.0..1.0));
        let k = linear_kernel(&z).into_matrix();
        let (eig, _) = crate::numerics::symmetric_eigen(&k).unwrap();
        assert!(eig.min() > -1e-10);
    }

    #[test]
    fn empirical_hsic_examples() {
        let l = KernelMatrix::identity(2);
        let zero = KernelMatrix::new(Matrix::zeros(2, 2)).unwrap();
        assert_eq!(empirical_hsic(&zero, &l).unwrap(), 0.0);
        assert_eq!(empirical_hsic(&l, &l).unwrap(), 2.0);

        assert!(empirical_hsic(&KernelMatrix::identity(3), &l).is_err());
        assert!(empirical_hsic(&KernelMatrix::identity(1), &KernelMatrix::identity(1)).is_err());
    }

    #[test]
    fn constant_labels_have_zero_dependence() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Matrix::from_fn(5, 12, |_, _| rng.random_range(-1.0..1.0));
        let (xc, _) = center_samples(&x).unwrap();
        let k = linear_kernel(&xc);
        let l = label_kernel(&LabelMatrix::from_counts(12, 0), 1.0).unwrap();
        assert!(empirical_hsic(&k, &l).unwrap().abs() < 1e-10);
    }

    #[test]
    fn kernel_matrix_rejects_asymmetric() {
        let mut m = Matrix::identity(2, 2);
        m[(1, 0)] = 0.5;
        assert!(KernelMatrix::new(m).is_err());
        assert!(KernelMatrix::new(Matrix::zeros(2, 3)).is_err());
    }
}
