//! End-to-end acceptance checks. Each criterion prints one `[pass]` or
//! `[FAIL]` line; the process exits non-zero if any fails.

use std::time::{Duration, Instant};

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oet_core::classifier::{default_reg, discrimination_error, train_classifier};
use oet_core::embedding::{
    learn_embedding_with_kernel, step_e2_with, E2Formula, SolveOptions, SolverConfig,
};
use oet_core::features::BoundingBox;
use oet_core::hsic::{empirical_hsic, label_kernel, linear_kernel, KernelMatrix, Label, LabelMatrix};
use oet_core::metrics::{center_error, drr, evaluate, iou};
use oet_core::numerics::{singular_value_shrinkage, soft_threshold, Matrix, Vector};
use oet_core::sequence_io::{parse_groundtruth, write_results};
use oet_core::synth::{generate_sequence, SynthSpec};
use oet_core::tracker::{track_sequence, TrackerConfig};

type Check = std::result::Result<(bool, String), String>;

struct Runner {
    failures: usize,
}

impl Runner {
    fn run(&mut self, id: u32, name: &str, limit: Duration, check: impl FnOnce() -> Check) {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (passed, detail) = match outcome {
            Ok((ok, detail)) => (ok && elapsed <= limit, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            self.failures += 1;
        }
        println!(
            "[{}] criterion {id} {name}: {detail} ({:.2} s, limit {} s)",
            if passed { "pass" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
}

fn uniform(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Matrix {
    Matrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

fn nuclear(m: &Matrix) -> f64 {
    m.clone().svd(false, false).singular_values.sum()
}

/// Orthonormal eigenvectors of the `d` largest eigenvalues.
fn top_eigenvectors(s: &Matrix, d: usize) -> Matrix {
    let eig = SymmetricEigen::new(s.clone());
    let mut order: Vec<usize> = (0..s.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    Matrix::from_fn(s.nrows(), d, |r, c| eig.eigenvectors[(r, order[c])])
}

/// Largest principal angle between the spans of two orthonormal bases,
/// through the sine form which stays accurate near zero.
fn principal_angle(a: &Matrix, b: &Matrix) -> f64 {
    let residual = a - b * (b.transpose() * a);
    let s = residual.svd(false, false).singular_values.max();
    s.min(1.0).asin()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (rank, &i) in order.iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox::new(x, y, w, h).unwrap()
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cfg = SolverConfig { robust: false, ..SolverConfig::default() };
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let x = uniform(&mut rng, 40, 30);
        let mut labels: Vec<Label> =
            (0..30).map(|_| if rng.random_bool(0.5) { Label::Target } else { Label::Background }).collect();
        labels[0] = Label::Target;
        labels[1] = Label::Background;
        let l = label_kernel(&LabelMatrix::new(labels), 1.0).map_err(|e| e.to_string())?;
        let model = learn_embedding_with_kernel(&x, &l, &cfg, SolveOptions::default()).map_err(|e| e.to_string())?;
        let mean = x.column_mean();
        let xc = Matrix::from_fn(40, 30, |r, c| x[(r, c)] - mean[r]);
        let s = &xc * l.as_matrix() * xc.transpose();
        let reference = top_eigenvectors(&((&s + s.transpose()) * 0.5), model.dim);
        worst = worst.max(principal_angle(&model.basis, &reference));
    }
    Ok((worst < 1e-6, format!("max principal angle {worst:.2e} rad over 50 instances")))
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut violations = 0;
    for _ in 0..20 {
        let theta = rng.random_range(0.05..1.5);
        let x = Vector::from_fn(25, |_, _| rng.random_range(-3.0..3.0));
        let y = soft_threshold(theta, &x).map_err(|e| e.to_string())?;
        let f = |v: &Vector| theta * v.lp_norm(1) + 0.5 * (v - &x).norm_squared();
        let best = f(&y);
        for k in 0..1000 {
            let scale = 10f64.powi(-(k % 5));
            let probe = &y + Vector::from_fn(25, |_, _| rng.random_range(-scale..scale));
            violations += (f(&probe) < best - 1e-12) as usize;
        }

        let theta = rng.random_range(0.1..2.0);
        let m = uniform(&mut rng, 8, 6) * 3.0;
        let y = singular_value_shrinkage(theta, &m).map_err(|e| e.to_string())?;
        let g = |v: &Matrix| theta * nuclear(v) + 0.5 * (v - &m).norm_squared();
        let best = g(&y);
        for k in 0..1000 {
            let scale = 10f64.powi(-(k % 5));
            let probe = &y + uniform(&mut rng, 8, 6) * scale;
            violations += (g(&probe) < best - 1e-10) as usize;
        }
    }
    Ok((violations == 0, format!("{violations} violations in 40000 perturbations")))
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let gradient = |a: &Matrix, x: &Matrix, q: &Matrix, e1: &Matrix, e2: &Matrix| {
        let f = |e: &Matrix| 0.5 * (a - (x - e) * q.transpose()).norm_squared() + 0.5 * (e1 - e).norm_squared();
        let h = 1e-4;
        let mut probe = e2.clone();
        let mut g = Matrix::zeros(e2.nrows(), e2.ncols());
        for k in 0..e2.len() {
            let orig = probe[k];
            probe[k] = orig + h;
            let up = f(&probe);
            probe[k] = orig - h;
            let down = f(&probe);
            probe[k] = orig;
            g[k] = (up - down) / (2.0 * h);
        }
        g.norm()
    };
    let (mut worst, mut flipped_best) = (0.0f64, f64::INFINITY);
    for _ in 0..20 {
        let (m, n) = (rng.random_range(3..9), rng.random_range(3..9));
        let x = uniform(&mut rng, m, n);
        let a = uniform(&mut rng, m, n);
        let e1 = uniform(&mut rng, m, n);
        let q = uniform(&mut rng, n, n);
        let e2 = step_e2_with(&a, &x, &q, &e1, E2Formula::Stationary).map_err(|e| e.to_string())?;
        worst = worst.max(gradient(&a, &x, &q, &e1, &e2));
        let bad = step_e2_with(&a, &x, &q, &e1, E2Formula::SignFlipped).map_err(|e| e.to_string())?;
        flipped_best = flipped_best.min(gradient(&a, &x, &q, &e1, &bad));
    }
    Ok((
        worst < 1e-6 && flipped_best >= 1e-6,
        format!("max gradient norm {worst:.2e}; sign-flipped variant min {flipped_best:.2e}"),
    ))
}

/// Low rank 3 plus gross corruption on 5% of the entries.
fn corrupted(rng: &mut ChaCha8Rng) -> Matrix {
    let (m, n) = (100, 50);
    let mut x = uniform(rng, m, 3) * uniform(rng, 3, n) * 2.0;
    let mut cells: Vec<usize> = (0..m * n).collect();
    for k in 0..m * n / 20 {
        let j = rng.random_range(k..m * n);
        cells.swap(k, j);
        let spike = rng.random_range(5.0..10.0);
        x[cells[k]] += if rng.random_bool(0.5) { spike } else { -spike };
    }
    x
}

fn criterion_4(dims: &mut Vec<usize>) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut recovered, mut monotone, mut terminated) = (0, 0, 0);
    for _ in 0..20 {
        let x = corrupted(&mut rng);
        let model = learn_embedding_with_kernel(
            &x,
            &KernelMatrix::centered_identity(50),
            &SolverConfig::default(),
            SolveOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        let t = &model.objective_trace;
        monotone += t.windows(2).all(|w| w[1] <= w[0] + 1e-9) as usize;
        let last_step = (t[t.len() - 1] - t[t.len() - 2]).abs();
        terminated += (model.iterations <= 500 && last_step < 1e-8) as usize;
        recovered += (model.dim == 3) as usize;
        dims.push(model.dim);
    }
    Ok((
        monotone == 20 && terminated == 20 && recovered >= 18,
        format!("non-increasing {monotone}/20, terminated {terminated}/20, d = 3 on {recovered}/20"),
    ))
}

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let psd = |rng: &mut ChaCha8Rng, n: usize| {
        let rank = rng.random_range(1..n + 1);
        let a = uniform(rng, n, rank);
        let k = &a * a.transpose();
        KernelMatrix::new((&k + k.transpose()) * 0.5)
    };
    let err = |e: oet_core::Error| e.to_string();
    let (mut asymmetric, mut negative, mut mismatch) = (0, 0, 0.0f64);
    for _ in 0..100 {
        let n = rng.random_range(2..16);
        let k = psd(&mut rng, n).map_err(err)?;
        let l = psd(&mut rng, n).map_err(err)?;
        let h = empirical_hsic(&k, &l).map_err(err)?;
        asymmetric += (h != empirical_hsic(&l, &k).map_err(err)?) as usize;
        negative += (h < 0.0) as usize;
        let oracle = (k.as_matrix() * l.as_matrix()).trace() / (n as f64 - 1.0);
        mismatch = mismatch.max((h - oracle).abs() / oracle.abs().max(1.0));
    }
    let mut constant: f64 = 0.0;
    for n in [2, 7, 30] {
        let z = uniform(&mut rng, 4, n);
        let l = label_kernel(&LabelMatrix::from_counts(n, 0), 1.0).map_err(err)?;
        constant = constant.max(empirical_hsic(&linear_kernel(&z), &l).map_err(err)?.abs());
    }
    Ok((
        asymmetric == 0 && negative == 0 && constant < 1e-10 && mismatch < 1e-9,
        format!(
            "asymmetric {asymmetric}/100, negative {negative}/100, constant-label |h| {constant:.1e}, \
             trace-oracle rel. error {mismatch:.1e}"
        ),
    ))
}

fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let err = |e: oet_core::Error| e.to_string();
    let mut worst = f64::INFINITY;
    for _ in 0..10 {
        let d = rng.random_range(2..6);
        let per_class = 20;
        let target = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)).normalize() * 4.0;
        let background = -&target;
        let mut z = Matrix::zeros(d, 2 * per_class);
        let mut y = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * per_class {
            let (centre, label, yi) =
                if i < per_class { (&target, Label::Target, 1.0) } else { (&background, Label::Background, 0.0) };
            let noise = Vector::from_fn(d, |_, _| rng.random_range(-0.3..0.3));
            z.set_column(i, &(centre + noise));
            y.push(yi);
            labels.push(label);
        }
        let clf = train_classifier(&z, &y, default_reg(y.len())).map_err(err)?;

        labels.push(Label::Target);
        let l = label_kernel(&LabelMatrix::new(labels), 1.0).map_err(err)?;
        let (mut errors, mut scores) = (Vec::new(), Vec::new());
        for _ in 0..50 {
            let t = rng.random_range(0.0..1.0);
            let noise = Vector::from_fn(d, |_, _| rng.random_range(-0.2..0.2));
            let c = &target * t + &background * (1.0 - t) + noise;
            errors.push(discrimination_error(&clf, &c).map_err(err)?);
            let mut aug = z.clone().insert_column(2 * per_class, 0.0);
            aug.set_column(2 * per_class, &c);
            // Higher dependence means more target-like, so negate to rank
            // in the same direction as the error.
            scores.push(-empirical_hsic(&linear_kernel(&aug), &l).map_err(err)?);
        }
        worst = worst.min(spearman(&errors, &scores));
    }
    Ok((worst > 0.9, format!("min Spearman correlation {worst:.4} over 10 sets of 50 candidates")))
}

struct Reference {
    text: String,
    seconds: f64,
}

fn criterion_7(reference: &mut Option<Reference>) -> Check {
    let err = |e: oet_core::Error| e.to_string();
    let start = Instant::now();
    let seq = generate_sequence(&SynthSpec::default()).map_err(err)?;
    let gt = &seq.ground_truth;
    let run = track_sequence(&seq.frames, gt[0], &TrackerConfig::default(), 1).map_err(err)?;
    let report = evaluate(&run.boxes, gt).map_err(err)?;
    let seconds = start.elapsed().as_secs_f64();
    let text = oet_core::sequence_io::format_results(&run.boxes);

    let frozen = parse_groundtruth(include_str!("data/synthetic_reference.txt")).map_err(err)?;
    let drift = if frozen.len() == run.boxes.len() {
        let d = run.boxes.iter().zip(&frozen).map(|(a, b)| center_error(a, b)).fold(0.0, f64::max);
        format!("{d:.2} px")
    } else {
        "length differs".into()
    };
    *reference = Some(Reference { text, seconds });
    Ok((
        report.mean_center_error < 5.0
            && report.precision_at_20 == 1.0
            && report.auc > 0.7
            && run.failed_frames.is_empty(),
        format!(
            "mean center error {:.2} px, precision@20 {:.3}, auc {:.3}, failed frames {}, \
             drift from frozen reference {drift}",
            report.mean_center_error,
            report.precision_at_20,
            report.auc,
            run.failed_frames.len()
        ),
    ))
}

fn criterion_8(reference: &Option<Reference>) -> Check {
    let err = |e: oet_core::Error| e.to_string();
    let reference = reference.as_ref().ok_or("criterion 7 produced no run")?;
    let seq = generate_sequence(&SynthSpec::default()).map_err(err)?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = dir.path().join("reference.txt");
    std::fs::write(&first, &reference.text).map_err(|e| e.to_string())?;
    let expected = std::fs::read(&first).map_err(|e| e.to_string())?;
    let mut detail = Vec::new();
    let mut all = true;
    for (i, workers) in [1, 8, 8].into_iter().enumerate() {
        let run = track_sequence(&seq.frames, seq.ground_truth[0], &TrackerConfig::default(), workers).map_err(err)?;
        let path = dir.path().join(format!("run{i}.txt"));
        write_results(&path, &run.boxes).map_err(err)?;
        let same = std::fs::read(&path).map_err(|e| e.to_string())? == expected;
        all &= same;
        detail.push(format!("{workers} worker(s) {}", if same { "identical" } else { "DIFFERENT" }));
    }
    Ok((all, format!("{}; reference run took {:.1} s", detail.join(", "), reference.seconds)))
}

fn criterion_9() -> Check {
    let err = |e: oet_core::Error| e.to_string();
    let a = bb(0.0, 0.0, 10.0, 10.0);
    let mut ok = iou(&a, &a) == 1.0
        && iou(&a, &bb(30.0, 30.0, 5.0, 5.0)) == 0.0
        && iou(&a, &bb(5.0, 0.0, 10.0, 10.0)) == 50.0 / 150.0
        && center_error(&a, &bb(3.0, 4.0, 10.0, 10.0)) == 5.0
        && center_error(&a, &a) == 0.0;

    // One perfect frame and one disjoint frame 100 px away.
    let gt = [a, bb(0.0, 0.0, 10.0, 10.0)];
    let r = evaluate(&[a, bb(100.0, 0.0, 10.0, 10.0)], &gt).map_err(err)?;
    ok &= r.precision_at_20 == 0.5
        && r.precision_curve.iter().all(|&p| p == 0.5)
        && r.success_curve.iter().all(|&s| s == 0.5)
        && r.auc == 0.5;

    // One perfect frame and one offset by (3, 4): error 5, overlap 42/158.
    let r = evaluate(&[a, bb(3.0, 4.0, 10.0, 10.0)], &gt).map_err(err)?;
    let precision: Vec<f64> = (0..=50).map(|t| if t < 5 { 0.5 } else { 1.0 }).collect();
    let success: Vec<f64> = (0..=20).map(|k| if k <= 5 { 1.0 } else { 0.5 }).collect();
    ok &= r.precision_curve == precision
        && r.success_curve == success
        && r.auc == success.iter().sum::<f64>() / 21.0
        && r.mean_center_error == 2.5
        && r.mean_overlap == (1.0 + 42.0 / 158.0) / 2.0;

    let r = evaluate(&[bb(200.0, 200.0, 10.0, 10.0)], &[a]).map_err(err)?;
    ok &= r.precision_at_20 == 0.0 && r.auc == 0.0;
    Ok((ok, "IoU, center-error and hand-counted evaluation fixtures".into()))
}

fn criterion_10(dims: &[usize]) -> Check {
    if dims.is_empty() {
        return Err("criterion 4 produced no models".into());
    }
    let ratios: Vec<f64> = dims.iter().map(|&d| drr(d, 100, 50)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let exact = ratios.iter().filter(|&&r| r == 3.0 / 50.0).count();
    Ok((exact >= 18, format!("DRR = 0.06 on {exact}/{} instances", ratios.len())))
}

fn main() {
    let secs = Duration::from_secs;
    let mut runner = Runner { failures: 0 };
    let mut dims = Vec::new();
    let mut reference = None;
    runner.run(1, "supervised-pca equivalence", secs(5), criterion_1);
    runner.run(2, "proximal-operator optimality", secs(10), criterion_2);
    runner.run(3, "coupling-step stationarity", secs(5), criterion_3);
    runner.run(4, "solver convergence", secs(30), || criterion_4(&mut dims));
    runner.run(5, "hsic suite", secs(2), criterion_5);
    runner.run(6, "classifier and hsic ranking", secs(5), criterion_6);
    runner.run(7, "synthetic tracking", secs(120), || criterion_7(&mut reference));
    runner.run(8, "determinism", secs(600), || criterion_8(&reference));
    runner.run(9, "metrics", secs(1), criterion_9);
    runner.run(10, "dimension reduction ratio", secs(1), || criterion_10(&dims));
    if runner.failures > 0 {
        println!("{} acceptance criteria failed", runner.failures);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
