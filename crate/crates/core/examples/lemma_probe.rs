//! Probes candidate λ = 0 instances for the lemma-suite identities:
//! mean identity, cross-derivative average, and the FD influence oracle.

use strata_core::influence::{influence_fd_oracle, influence_matrix_at, moments, CrossDerivativeRow};
use strata_core::model::{train, TrainConfig};
use strata_core::synthetic::{builtin_distributions, generate, FeatureEncoding, MixtureSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(30);
    let cfg = TrainConfig {
        ridge: 0.0,
        epochs: 0,
        grad_tol: 1e-8,
        ..TrainConfig::default()
    };
    let dists = builtin_distributions();
    for seed in 0..6u64 {
        let mut spec = MixtureSpec::new(
            vec![(dists[0].clone(), 2 * n / 3), (dists[1].clone(), n - 2 * n / 3)],
            seed,
        );
        spec.encoding = FeatureEncoding::Integer;
        let ds = generate(&spec).unwrap();
        let fit = match train(&ds, &cfg) {
            Ok(f) => f,
            Err(e) => {
                println!("seed={seed} TRAIN FAILED: {e}");
                continue;
            }
        };
        let norm = fit.params.theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        let x = influence_matrix_at(&ds, &fit.params).unwrap();
        let report = moments(&x, 2).unwrap();
        let diag_sum: f64 = (0..n).map(|i| x.get(i, i)).sum();
        let mean_resid = (report.raw_moments[0] + diag_sum / (n * (n - 1)) as f64).abs();
        let mut max_claim = 0.0_f64;
        for (zi, zj) in [(0usize, 5usize), (3, 17), (11, 29)] {
            let row = CrossDerivativeRow::new(ds.point(zi), ds.point(zj), &ds, &fit.params).unwrap();
            let mut sum = 0.0;
            for y in ds.points() {
                sum += row.eval(y).unwrap();
            }
            max_claim = max_claim.max((sum / n as f64 + x.get(zi, zj)).abs());
        }
        let mut max_rel = 0.0_f64;
        for (zi, zj) in [(1usize, 8usize), (14, 22)] {
            let fd = influence_fd_oracle(zi, zj, &ds, &cfg, &fit, 1e-4).unwrap();
            let rel = (fd - x.get(zj, zi)).abs() / fd.abs().max(1e-12);
            max_rel = max_rel.max(rel);
        }
        println!(
            "seed={seed} loss={:.4} |th|={:<8.2} grad={:.1e} mean_resid={:.2e} cross_avg={:.2e} fd_rel={:.2e}",
            fit.final_loss, norm, fit.grad_norm, mean_resid, max_claim, max_rel
        );
    }
}
