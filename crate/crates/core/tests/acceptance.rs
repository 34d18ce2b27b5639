//! Acceptance gate: one test per criterion, each printing a single pass/fail
//! line with its pinned tolerances. Heavy statistical criteria reuse shared
//! sweep results through `OnceLock`. The two IDX-based criteria need
//! user-supplied image/label files and skip honestly when the
//! `STRATA_EMNIST_IMAGES` / `STRATA_EMNIST_LABELS` environment variables are
//! unset.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use strata_core::data::{load_idx, mislabel, split, SplitSpec};
use strata_core::dataset::Dataset;
use strata_core::influence::{influence_fd_oracle, influence_matrix_at, moments, CrossDerivativeRow};
use strata_core::model::{predict_accuracy, train, FitResult, TrainConfig};
use strata_core::purify::{purify, PurifyConfig, PurifyMethod};
use strata_core::synthetic::{builtin_distributions, generate, FeatureEncoding, MixtureSpec};
use strata_core::theory::{
    corollary_search, entropy, frozen, lemma_instance, lemma_train_cfg, theorem_instance,
    theorem_train_cfg, variance_drop, Normalization, TheoremCheckReport,
};

/// Ridge for the composition sweeps; small enough for ≥ 0.90 pure-endpoint
/// accuracy, large enough that V[X] stays graded across mixed compositions
/// (the entropy rank correlation needs the gradation).
const SWEEP_RIDGE: f64 = 5e-5;
/// Ridge for the purification runs.
const PURIFY_RIDGE: f64 = 1e-3;
/// Unregularized optima with ‖θ‖ above this are treated as not attained
/// (the loss infimum sits at infinity); such draws are skipped.
const SEPARABLE_THETA_NORM: f64 = 50.0;

fn sd_mixture(counts: &[usize], seed: u64, encoding: FeatureEncoding) -> Dataset {
    let dists = builtin_distributions();
    let components = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (dists[i].clone(), c))
        .collect();
    let mut spec = MixtureSpec::new(components, seed);
    spec.encoding = encoding;
    generate(&spec).expect("mixture generates")
}

/// splitmix64 combiner; matches the CLI's per-cell seed derivation.
fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn theta_norm(fit: &FitResult) -> f64 {
    fit.params.theta.iter().map(|t| t * t).sum::<f64>().sqrt()
}

fn verdict(line: &str, pass: bool) {
    println!("{line} [{}]", if pass { "pass" } else { "FAIL" });
    assert!(pass, "{line}");
}

/// The 20-instance λ = 0 suite shared by criteria 1 and 2: n = 50
/// integer-coded SD-2 draws whose unregularized optimum is interior.
/// One-hot coding at this size is linearly separable for any labeling
/// (4·41 = 164 parameters against 50 points), so the λ = 0 optimum is never
/// attained there and the influence identities have no value to converge to;
/// separable integer-coded draws are skipped by the ‖θ‖ filter for the same
/// reason.
fn lambda0_suite() -> &'static Vec<(u64, Dataset, FitResult)> {
    static SUITE: OnceLock<Vec<(u64, Dataset, FitResult)>> = OnceLock::new();
    SUITE.get_or_init(|| {
        let cfg = lemma_train_cfg();
        let mut out = Vec::new();
        let mut seed = 0u64;
        while out.len() < 20 {
            assert!(seed < 200, "ran out of seeds hunting interior optima");
            let ds = lemma_instance(50, seed).expect("instance generates");
            if let Ok(fit) = train(&ds, &cfg) {
                if theta_norm(&fit) <= SEPARABLE_THETA_NORM {
                    out.push((seed, ds, fit));
                }
            }
            seed += 1;
        }
        out
    })
}

#[test]
fn c01_influence_matches_retraining_oracle() {
    let t0 = Instant::now();
    let cfg = lemma_train_cfg();
    let pairs = [(1usize, 8usize), (14, 22), (3, 40), (27, 33), (10, 49)];
    let mut max_rel = 0.0_f64;
    for (_, ds, fit) in lambda0_suite() {
        let x = influence_matrix_at(ds, &fit.params).unwrap();
        for &(zi, zj) in &pairs {
            // Richardson-extrapolated central quotient: cancels the O(h²)
            // truncation term, which otherwise dominates on pairs with small
            // influence and large third derivative
            let d1 = influence_fd_oracle(zi, zj, ds, &cfg, fit, 2e-4).unwrap();
            let d2 = influence_fd_oracle(zi, zj, ds, &cfg, fit, 1e-4).unwrap();
            let fd = (4.0 * d2 - d1) / 3.0;
            let rel = (fd - x.get(zj, zi)).abs() / fd.abs().max(1e-12);
            max_rel = max_rel.max(rel);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        &format!(
            "criterion 1: analytic vs retraining-oracle influence, 20 instances x 5 pairs, \
             max rel err {max_rel:.3e} <= 1e-3, {secs:.1}s <= 120s"
        ),
        max_rel <= 1e-3 && secs <= 120.0,
    );
}

#[test]
fn c02_symmetry_and_mean_identity() {
    let mut max_asym = 0.0_f64;
    let mut max_mean_err = 0.0_f64;
    for (_, ds, fit) in lambda0_suite() {
        let x = influence_matrix_at(ds, &fit.params).unwrap();
        let n = ds.len();
        for i in 0..n {
            for j in (i + 1)..n {
                max_asym = max_asym.max((x.get(i, j) - x.get(j, i)).abs());
            }
        }
        // at a λ = 0 optimum Σ∇L = 0, so the off-diagonal sum telescopes to
        // the diagonal: E[X] = (1/(n(n−1)))·Σ_z ∇L(z)ᵀH⁻¹∇L(z)
        let report = moments(&x, 2).unwrap();
        let diag: f64 = (0..n).map(|i| x.get(i, i)).sum();
        max_mean_err = max_mean_err.max((report.raw_moments[0] + diag / (n * (n - 1)) as f64).abs());
    }
    verdict(
        &format!(
            "criterion 2: symmetry max asym {max_asym:.1e} == 0, mean identity max err \
             {max_mean_err:.3e} <= 1e-8"
        ),
        max_asym == 0.0 && max_mean_err <= 1e-8,
    );
}

#[test]
fn c03_cross_derivative_average() {
    let cfg = lemma_train_cfg();
    let ds = lemma_instance(30, frozen::LEMMA_SEED).unwrap();
    let fit = train(&ds, &cfg).unwrap();
    let x = influence_matrix_at(&ds, &fit.params).unwrap();
    let n = ds.len();
    let mut max_err = 0.0_f64;
    for zi in 0..n {
        for zj in (zi + 1)..n {
            let row = CrossDerivativeRow::new(ds.point(zi), ds.point(zj), &ds, &fit.params).unwrap();
            let mut sum = 0.0;
            for y in ds.points() {
                sum += row.eval(y).unwrap();
            }
            // the averaged cross-derivative equals −X: along the all-ones
            // deformation direction the optimum is fixed while the Hessian
            // scales by (1 + nc), so the row sum telescopes to −n·X
            max_err = max_err.max((sum / n as f64 + x.get(zi, zj)).abs());
        }
    }
    verdict(
        &format!(
            "criterion 3: cross-derivative average = -X over all {} pairs at n=30, \
             max err {max_err:.3e} <= 1e-8",
            n * (n - 1) / 2
        ),
        max_err <= 1e-8,
    );
}

/// Ratio tolerances for `lhs / ((2s/(n−2))·V)`: ±50% at n = 20 narrowing
/// linearly to ±15% at n = 60.
const RATIO_TOL: [(usize, f64); 4] = [(20, 0.50), (30, 0.42), (40, 0.33), (60, 0.15)];

fn u_scaled(reports: Vec<TheoremCheckReport>) -> TheoremCheckReport {
    reports
        .into_iter()
        .find(|r| r.normalization == Normalization::UScaled)
        .expect("u-scaled report present")
}

fn variance_grid() -> &'static Vec<TheoremCheckReport> {
    static GRID: OnceLock<Vec<TheoremCheckReport>> = OnceLock::new();
    GRID.get_or_init(|| {
        let cfg = theorem_train_cfg();
        RATIO_TOL
            .iter()
            .map(|&(n, _)| {
                let ds = theorem_instance(n, frozen::instance_seed(n)).unwrap();
                u_scaled(variance_drop(&ds, 1, &cfg).unwrap())
            })
            .collect()
    })
}

#[test]
fn c04_variance_drop() {
    let t0 = Instant::now();
    let mut pass = true;
    let mut detail = String::new();
    let mut residuals = Vec::new();
    for (r, &(n, tol)) in variance_grid().iter().zip(RATIO_TOL.iter()) {
        assert_eq!(r.n, n);
        let ratio = r.lhs / r.rhs_theory;
        let scaled = r.residual * (n * n) as f64;
        let ok = (ratio - 1.0).abs() <= tol && scaled.abs() <= frozen::VARIANCE_RESIDUAL_N2;
        pass &= ok;
        detail.push_str(&format!(" n={n} ratio {ratio:.3} (tol ±{tol})"));
        residuals.push(r.residual.abs());
    }
    // in-grid decay: the O(n⁻²) residual should shrink by at least 2.4x from
    // n = 30 to n = 60 (the asymptotic 4x only emerges past n ≈ 300 because
    // the base variance still grows like V∞ − c/n at these sizes)
    let decay_ok = residuals[3] <= residuals[1] / 2.4;
    pass &= decay_ok;
    let secs = t0.elapsed().as_secs_f64();
    pass &= secs <= 600.0;
    verdict(
        &format!(
            "criterion 4: variance drop s=1,{detail}, residual*n^2 <= {}, \
             decay res(60) {:.2e} <= res(30)/2.4 {:.2e}, {secs:.0}s <= 600s",
            frozen::VARIANCE_RESIDUAL_N2,
            residuals[3],
            residuals[1] / 2.4
        ),
        pass,
    );
}

#[test]
fn c05_corollary_singleton_search() {
    let cfg = theorem_train_cfg();
    let mut pass = true;
    let mut detail = String::new();
    for (r, &(n, _)) in variance_grid().iter().zip(RATIO_TOL.iter()) {
        let ds = theorem_instance(n, frozen::instance_seed(n)).unwrap();
        let (_, drop) = corollary_search(&ds, 1, &cfg).unwrap();
        let bound =
            2.0 / (n - 2) as f64 * r.base_stat - frozen::COROLLARY_SLACK_N2 / (n * n) as f64;
        let ok = drop >= bound;
        pass &= ok;
        detail.push_str(&format!(" n={n} drop {drop:.3e} >= {bound:.3e}"));
    }
    verdict(&format!("criterion 5: best singleton drop,{detail}"), pass);
}

struct SweepCell {
    counts: Vec<usize>,
    mean_variance: f64,
    mean_test_acc: f64,
    entropy: f64,
}

fn sweep_cell(counts: &[usize], seed: u64, ridge: f64) -> (f64, f64) {
    let full = sd_mixture(counts, seed, FeatureEncoding::OneHot);
    let spec = SplitSpec {
        train_fraction: 0.8,
        stratified: true,
        seed: mix_seed(seed, 1, 0),
    };
    let (train_set, test_set) = split(&full, &spec).unwrap();
    let cfg = TrainConfig {
        ridge,
        ..TrainConfig::default()
    };
    let fit = train(&train_set, &cfg).unwrap();
    let x = influence_matrix_at(&train_set, &fit.params).unwrap();
    let variance = moments(&x, 2).unwrap().variance;
    let acc = predict_accuracy(&test_set, &fit.params).unwrap();
    (variance, acc)
}

fn run_sweep(grid: Vec<Vec<usize>>, replicates: usize, ridge: f64) -> Vec<SweepCell> {
    grid.into_iter()
        .enumerate()
        .map(|(gi, counts)| {
            let total: usize = counts.iter().sum();
            let fractions: Vec<f64> =
                counts.iter().map(|&c| c as f64 / total as f64).collect();
            let mut vs = 0.0;
            let mut accs = 0.0;
            for rep in 0..replicates {
                let (v, a) = sweep_cell(&counts, mix_seed(0, gi as u64, rep as u64), ridge);
                vs += v;
                accs += a;
            }
            SweepCell {
                entropy: entropy(&fractions).unwrap(),
                counts,
                mean_variance: vs / replicates as f64,
                mean_test_acc: accs / replicates as f64,
            }
        })
        .collect()
}

/// The criterion-6 sweep (total 600, 11-point grid, 5 replicates), shared
/// with criterion 11.
fn sd2_sweep() -> &'static Vec<SweepCell> {
    static SWEEP: OnceLock<Vec<SweepCell>> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let grid: Vec<Vec<usize>> = (0..11).map(|i| vec![600 - i * 60, i * 60]).collect();
        run_sweep(grid, 5, SWEEP_RIDGE)
    })
}

fn argmax_by<F: Fn(&SweepCell) -> f64>(cells: &[SweepCell], f: F) -> usize {
    let mut best = 0;
    for i in 1..cells.len() {
        if f(&cells[i]) > f(&cells[best]) {
            best = i;
        }
    }
    best
}

#[test]
fn c06_sd2_composition_sweep() {
    let t0 = Instant::now();
    let cells = sd2_sweep();
    let mid = 5usize; // 300/300
    let v_peak = argmax_by(cells, |c| c.mean_variance);
    let acc_min = argmax_by(cells, |c| -c.mean_test_acc);
    let end_a = cells[0].mean_test_acc;
    let end_b = cells[10].mean_test_acc;
    let secs = t0.elapsed().as_secs_f64();
    let pass = v_peak.abs_diff(mid) <= 1
        && acc_min.abs_diff(mid) <= 1
        && end_a >= 0.90
        && end_b >= 0.90
        && secs <= 900.0;
    verdict(
        &format!(
            "criterion 6: V peak at {:?} (within 1 step of 300/300), acc min at {:?}, \
             endpoint acc {end_a:.3}/{end_b:.3} >= 0.90, {secs:.0}s <= 900s",
            cells[v_peak].counts, cells[acc_min].counts
        ),
        pass,
    );
}

#[test]
fn c07_sd3_simplex_surface() {
    let mut grid = Vec::new();
    for n2 in (0..=600usize).step_by(100) {
        for n3 in (0..=600 - n2).step_by(100) {
            grid.push(vec![600 - n2 - n3, n2, n3]);
        }
    }
    let cells = run_sweep(grid, 3, SWEEP_RIDGE);
    let peak = argmax_by(&cells, |c| c.mean_variance);
    let peak_counts = &cells[peak].counts;
    // adjacent: one simplex move of step 100 away from 200/200/200
    let dist: usize = peak_counts
        .iter()
        .map(|&c| c.abs_diff(200))
        .sum::<usize>()
        / 2;
    verdict(
        &format!(
            "criterion 7: SD-3 V peak at {peak_counts:?}, simplex distance {} <= 1 step \
             from 200/200/200",
            dist / 100
        ),
        dist / 100 <= 1,
    );
}

/// Full-scale purification (700/300 train, 20 iterations); minutes of
/// runtime, so it only runs when `STRATA_FULL_PURIFY` is set. The default CI
/// path is the reduced smoke variant below.
#[test]
fn c08_purification_full() {
    if std::env::var_os("STRATA_FULL_PURIFY").is_none() {
        println!("criterion 8 (full): skipped (set STRATA_FULL_PURIFY=1 to enable)");
        return;
    }
    let train_set = sd_mixture(&[700, 300], 0, FeatureEncoding::OneHot);
    let test_set = sd_mixture(&[1000, 0], 1_000_003, FeatureEncoding::OneHot);
    let cfg = PurifyConfig {
        iterations: 20,
        remove_per_iter: 10,
        method: PurifyMethod::LooRetrain,
        train_cfg: TrainConfig {
            ridge: PURIFY_RIDGE,
            // n ≈ 1000 leave-one-out retrains stall just above 1e-8
            grad_tol: 1e-7,
            ..TrainConfig::default()
        },
        seed: 0,
        warm_start: true,
    };
    let trace = purify(&train_set, &test_set, &cfg).unwrap();
    let (best_acc, removed) = trace.best_test_accuracy();
    let v0 = trace.records[0].variance;
    let v5 = trace.records[5].variance;
    verdict(
        &format!(
            "criterion 8 (full): max acc {best_acc:.3} within 0.86 ± 0.05 at {removed} removed \
             (in [150, 230]), V iter5 {v5:.1} < iter0 {v0:.1}"
        ),
        (best_acc - 0.86).abs() <= 0.05 && (150..=230).contains(&removed) && v5 < v0,
    );
}

#[test]
fn c08_purification_smoke() {
    let t0 = Instant::now();
    let train_set = sd_mixture(&[210, 90], 0, FeatureEncoding::OneHot);
    let test_set = sd_mixture(&[1000, 0], 1_000_003, FeatureEncoding::OneHot);
    let cfg = PurifyConfig {
        iterations: 10,
        remove_per_iter: 10,
        method: PurifyMethod::LooRetrain,
        train_cfg: TrainConfig {
            ridge: PURIFY_RIDGE,
            ..TrainConfig::default()
        },
        seed: 0,
        warm_start: true,
    };
    let trace = purify(&train_set, &test_set, &cfg).unwrap();
    let base_acc = trace.records[0].test_acc;
    let (best_acc, removed) = trace.best_test_accuracy();
    let improvement = best_acc - base_acc;
    let v0 = trace.records[0].variance;
    let v5 = trace.records[5].variance;
    let secs = t0.elapsed().as_secs_f64();
    let pass = improvement >= 0.05 && v5 < v0 && secs <= 600.0;
    verdict(
        &format!(
            "criterion 8 (smoke): accuracy {base_acc:.3} -> {best_acc:.3} (+{improvement:.3} \
             >= 0.05, at {removed} removed), V iter5 {v5:.1} < iter0 {v0:.1}, {secs:.0}s <= 600s"
        ),
        pass,
    );
}

fn emnist_paths() -> Option<(PathBuf, PathBuf)> {
    let images = std::env::var_os("STRATA_EMNIST_IMAGES")?;
    let labels = std::env::var_os("STRATA_EMNIST_LABELS")?;
    Some((PathBuf::from(images), PathBuf::from(labels)))
}

#[test]
fn c09_emnist_purification() {
    let Some((images, labels)) = emnist_paths() else {
        println!(
            "criterion 9: skipped (set STRATA_EMNIST_IMAGES / STRATA_EMNIST_LABELS to the \
             EMNIST digit IDX files to enable)"
        );
        return;
    };
    let full = load_idx(&images, &labels, &[4, 8], 375, 0).unwrap();
    let spec = SplitSpec {
        train_fraction: 0.8,
        stratified: true,
        seed: 23,
    };
    let (clean_train, test_set) = split(&full, &spec).unwrap();
    let (train_set, _) = mislabel(&clean_train, 0.30, 17).unwrap();
    let cfg = PurifyConfig {
        iterations: 20,
        remove_per_iter: 10,
        method: PurifyMethod::LooRetrain,
        train_cfg: TrainConfig {
            ridge: PURIFY_RIDGE,
            ..TrainConfig::default()
        },
        seed: 0,
        warm_start: true,
    };
    let trace = purify(&train_set, &test_set, &cfg).unwrap();
    let (best_acc, removed) = trace.best_test_accuracy();
    verdict(
        &format!(
            "criterion 9: EMNIST 4/8 r=0.30 purification max acc {best_acc:.3} within \
             0.957 ± 0.03 (at {removed} removed)"
        ),
        (best_acc - 0.957).abs() <= 0.03,
    );
}

/// Counts order inversions in a sequence expected to be non-decreasing.
fn inversions(xs: &[f64]) -> usize {
    xs.windows(2).filter(|w| w[1] < w[0]).count()
}

#[test]
fn c10_emnist_error_rate_sweep() {
    let Some((images, labels)) = emnist_paths() else {
        println!(
            "criterion 10: skipped (set STRATA_EMNIST_IMAGES / STRATA_EMNIST_LABELS to the \
             EMNIST digit IDX files to enable)"
        );
        return;
    };
    let full = load_idx(&images, &labels, &[4, 8], 375, 0).unwrap();
    let rates = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
    let replicates = 3;
    let cfg = TrainConfig {
        ridge: PURIFY_RIDGE,
        ..TrainConfig::default()
    };
    let mut mean_v = Vec::new();
    let mut mean_acc = Vec::new();
    for (ri, &rate) in rates.iter().enumerate() {
        let mut vs = 0.0;
        let mut accs = 0.0;
        for rep in 0..replicates {
            let seed = mix_seed(0, ri as u64, rep as u64);
            let spec = SplitSpec {
                train_fraction: 0.8,
                stratified: true,
                seed,
            };
            let (clean_train, test_set) = split(&full, &spec).unwrap();
            let (train_set, _) = mislabel(&clean_train, rate, mix_seed(seed, 2, 0)).unwrap();
            let fit = train(&train_set, &cfg).unwrap();
            let x = influence_matrix_at(&train_set, &fit.params).unwrap();
            vs += moments(&x, 2).unwrap().variance;
            accs += predict_accuracy(&test_set, &fit.params).unwrap();
        }
        mean_v.push(vs / replicates as f64);
        mean_acc.push(accs / replicates as f64);
    }
    let v_inv = inversions(&mean_v);
    let neg_acc: Vec<f64> = mean_acc.iter().map(|a| -a).collect();
    let acc_inv = inversions(&neg_acc);
    verdict(
        &format!(
            "criterion 10: EMNIST error-rate sweep, V inversions {v_inv} <= 1, accuracy \
             inversions {acc_inv} <= 1"
        ),
        v_inv <= 1 && acc_inv <= 1,
    );
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(xs: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
        let mut out = vec![0.0; xs.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &order[i..=j] {
                out[k] = avg;
            }
            i = j + 1;
        }
        out
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn c11_entropy_metric() {
    // unit checks: pure block has zero entropy, uniform ℓ-block mix attains
    // the maximum log ℓ, and a 2:1 split matches the closed form
    let pure = entropy(&[1.0]).unwrap();
    let uniform4 = entropy(&[0.25; 4]).unwrap();
    let two_one = entropy(&[2.0 / 3.0, 1.0 / 3.0]).unwrap();
    let closed = -(2.0 / 3.0_f64) * (2.0 / 3.0_f64).ln() - (1.0 / 3.0_f64) * (1.0 / 3.0_f64).ln();
    let units_ok = pure == 0.0
        && (uniform4 - 4.0_f64.ln()).abs() <= 1e-15
        && (two_one - closed).abs() <= 1e-15;

    let cells = sd2_sweep();
    let v: Vec<f64> = cells.iter().map(|c| c.mean_variance).collect();
    let e: Vec<f64> = cells.iter().map(|c| c.entropy).collect();
    let rho = spearman(&v, &e);
    verdict(
        &format!(
            "criterion 11: entropy units exact (uniform-4 = log 4, pure = 0), \
             Spearman(V, E) = {rho:.3} >= 0.8"
        ),
        units_ok && rho >= 0.8,
    );
}
