//! Scans SD-2 mixing ratios and seeds for theorem-instance quality at λ = 0.

use strata_core::influence::{influence_matrix_at, moments};
use strata_core::model::train;
use strata_core::synthetic::{builtin_distributions, generate, FeatureEncoding, MixtureSpec};
use strata_core::theory::{theorem_train_cfg, variance_drop, Normalization};

fn main() {
    let cfg = theorem_train_cfg();
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(30);
    let fracs: Vec<f64> = vec![0.5, 0.6, 0.7];
    let dists = builtin_distributions();
    for &f in &fracs {
        let n1 = (f * n as f64).round() as usize;
        for seed in 0..10u64 {
            let mut spec = MixtureSpec::new(
                vec![(dists[0].clone(), n1), (dists[1].clone(), n - n1)],
                seed,
            );
            spec.encoding = FeatureEncoding::Integer;
            let ds = generate(&spec).unwrap();
            match train(&ds, &cfg) {
                Ok(fit) => {
                    let norm = fit.params.theta.iter().map(|t| t * t).sum::<f64>().sqrt();
                    let x = influence_matrix_at(&ds, &fit.params).unwrap();
                    let v = moments(&x, 2).unwrap().variance;
                    if v < 1e-12 {
                        println!("n={n} n1={n1} seed={seed} separable-ish (V={v:.1e})");
                        continue;
                    }
                    match variance_drop(&ds, 1, &cfg) {
                        Ok(reports) => {
                            let u = reports
                                .iter()
                                .find(|r| r.normalization == Normalization::UScaled)
                                .unwrap();
                            println!(
                                "n={n} n1={n1} seed={seed} loss={:.3} |th|={:<7.1} V={:<9.2e} lhs/rhs={:+.3} rn2={:+.2e}",
                                fit.final_loss,
                                norm,
                                v,
                                u.lhs / u.rhs_theory,
                                u.residual * (n * n) as f64
                            );
                        }
                        Err(e) => println!("n={n} n1={n1} seed={seed} drop failed: {e}"),
                    }
                }
                Err(e) => println!("n={n} n1={n1} seed={seed} TRAIN FAILED: {e}"),
            }
        }
    }
}
