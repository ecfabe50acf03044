//! Seeded self-checks of the subspace solver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::{
    learn_embedding_with_kernel, step_e2_with, supervised_pca, E2Formula, SolveOptions, SolverConfig,
};
use crate::error::Result;
use crate::hsic::{label_kernel, KernelMatrix, Label, LabelMatrix};
use crate::numerics::{max_principal_angle, psd_factor, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    /// Objective traces of the solver runs behind the check.
    pub traces: Vec<Vec<f64>>,
}

fn uniform(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Matrix {
    Matrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

fn mixed_labels(rng: &mut ChaCha8Rng, n: usize) -> LabelMatrix {
    let mut labels: Vec<Label> =
        (0..n).map(|_| if rng.random_bool(0.5) { Label::Target } else { Label::Background }).collect();
    labels[0] = Label::Target;
    labels[1] = Label::Background;
    LabelMatrix::new(labels)
}

/// Low rank plus sparse gross corruption on 5% of the entries.
pub fn corrupted_low_rank(rng: &mut ChaCha8Rng, m: usize, n: usize, rank: usize) -> Matrix {
    let mut x = uniform(rng, m, rank) * uniform(rng, rank, n) * 2.0;
    let count = m * n / 20;
    let mut hit = vec![false; m * n];
    let mut placed = 0;
    while placed < count {
        let k = rng.random_range(0..m * n);
        if !hit[k] {
            hit[k] = true;
            placed += 1;
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            x[k] += sign * rng.random_range(5.0..10.0);
        }
    }
    x
}

/// Gradient of `1/2 ||A - (X - E2) Q^T||^2 + 1/2 ||E1 - E2||^2` in `E2` by
/// central differences.
fn coupling_gradient(a: &Matrix, x: &Matrix, q: &Matrix, e1: &Matrix, e2: &Matrix) -> Matrix {
    let f = |e: &Matrix| 0.5 * (a - (x - e) * q.transpose()).norm_squared() + 0.5 * (e1 - e).norm_squared();
    let h = 1e-4;
    let mut g = Matrix::zeros(e2.nrows(), e2.ncols());
    let mut probe = e2.clone();
    for k in 0..e2.len() {
        let orig = probe[k];
        probe[k] = orig + h;
        let up = f(&probe);
        probe[k] = orig - h;
        let down = f(&probe);
        probe[k] = orig;
        g[k] = (up - down) / (2.0 * h);
    }
    g
}

/// Run the battery. `formula` selects the coupling-step closed form so the
/// sign mutation can be injected.
pub fn run_solver_checks(seed: u64, formula: E2Formula) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = SolveOptions { e2_formula: formula };
    let mut out = Vec::new();

    // Sparse term disabled: the basis is the supervised-PCA eigenbasis.
    let mut worst: f64 = 0.0;
    let mut traces = Vec::new();
    for _ in 0..10 {
        let x = uniform(&mut rng, 40, 30);
        let l = label_kernel(&mixed_labels(&mut rng, 30), 1.0)?;
        let cfg = SolverConfig { robust: false, ..SolverConfig::default() };
        let model = learn_embedding_with_kernel(&x, &l, &cfg, opts)?;
        let (xc, _) = crate::hsic::center_samples(&x)?;
        let reference = supervised_pca(&xc, &l, model.dim)?;
        worst = worst.max(max_principal_angle(&model.basis, &reference)?);
        traces.push(model.objective_trace);
    }
    out.push(CheckResult {
        name: "supervised-pca equivalence",
        passed: worst < 1e-6,
        detail: format!("max principal angle {worst:.3e} rad over 10 instances (limit 1e-6)"),
        traces,
    });

    // Rank recovery and monotone convergence on corrupted low-rank data.
    let mut recovered = 0;
    let mut monotone = true;
    let mut converged = 0;
    let mut traces = Vec::new();
    for _ in 0..5 {
        let x = corrupted_low_rank(&mut rng, 100, 50, 3);
        let model =
            learn_embedding_with_kernel(&x, &KernelMatrix::centered_identity(50), &SolverConfig::default(), opts);
        let Ok(model) = model else { continue };
        recovered += (model.dim == 3) as usize;
        converged += model.converged as usize;
        monotone &= model.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9);
        traces.push(model.objective_trace);
    }
    out.push(CheckResult {
        name: "rank recovery",
        passed: recovered >= 4,
        detail: format!("d = 3 recovered on {recovered}/5 corrupted rank-3 instances (need 4)"),
        traces: Vec::new(),
    });
    out.push(CheckResult {
        name: "convergence",
        passed: monotone && converged == 5,
        detail: format!("objective non-increasing: {monotone}; converged {converged}/5"),
        traces,
    });

    // Coupling step lands on a zero of the gradient.
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let (m, n) = (6, 8);
        let x = uniform(&mut rng, m, n);
        let a = uniform(&mut rng, m, n);
        let e1 = uniform(&mut rng, m, n);
        let l = label_kernel(&mixed_labels(&mut rng, n), 1.0)?;
        let q = psd_factor(l.as_matrix())?;
        let e2 = step_e2_with(&a, &x, &q, &e1, formula)?;
        worst = worst.max(coupling_gradient(&a, &x, &q, &e1, &e2).norm());
    }
    out.push(CheckResult {
        name: "coupling-step gradient",
        passed: worst < 1e-6,
        detail: format!("max gradient norm {worst:.3e} over 5 instances (limit 1e-6)"),
        traces: Vec::new(),
    });
    Ok(out)
}
