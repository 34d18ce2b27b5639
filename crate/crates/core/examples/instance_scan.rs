//! Scans candidate seeds for the standard theorem instances, reporting
//! convergence, loss, parameter norm, variance, and the s = 1 variance-drop
//! ratio. Used to pick the frozen per-size instance seeds.
//!
//! Usage: instance_scan [ns] [seeds] [ridge]

use strata_core::model::train;
use strata_core::theory::{theorem_instance, theorem_train_cfg, variance_drop, Normalization};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ns: Vec<usize> = if args.len() > 1 {
        args[1].split(',').map(|s| s.parse().unwrap()).collect()
    } else {
        vec![20, 30]
    };
    let seeds: Vec<u64> = if args.len() > 2 {
        args[2].split(',').map(|s| s.parse().unwrap()).collect()
    } else {
        (0..12).collect()
    };
    let mut cfg = theorem_train_cfg();
    if let Some(r) = args.get(3) {
        cfg.ridge = r.parse().unwrap();
    }
    for &n in &ns {
        for &seed in &seeds {
            let ds = theorem_instance(n, seed).unwrap();
            match train(&ds, &cfg) {
                Ok(fit) => {
                    let norm = fit.params.theta.iter().map(|t| t * t).sum::<f64>().sqrt();
                    let (v, ratio) = match variance_drop(&ds, 1, &cfg) {
                        Ok(reports) => {
                            let u = reports
                                .iter()
                                .find(|r| r.normalization == Normalization::UScaled)
                                .unwrap();
                            let txt = if u.base_stat.abs() < 1e-14 {
                                "variance ~ 0 (separable-ish)".to_string()
                            } else {
                                format!(
                                    "lhs/rhs {:+.4} resid*n^2 {:+.2e}",
                                    u.lhs / u.rhs_theory,
                                    u.residual * (n * n) as f64
                                )
                            };
                            (u.base_stat, txt)
                        }
                        Err(e) => (f64::NAN, format!("drop failed: {e}")),
                    };
                    println!(
                        "n={n:>3} seed={seed:>3} loss={:.4e} |theta|={:<8.2} V={:<10.3e} {}",
                        fit.final_loss, norm, v, ratio
                    );
                }
                Err(e) => println!("n={n:>3} seed={seed:>3} TRAIN FAILED: {e}"),
            }
        }
    }
}
