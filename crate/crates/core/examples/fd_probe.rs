//! Probes the finite-difference oracle match on one-hot n=50 instances at
//! ridge 0: convergence of the unregularized Newton fit and the relative
//! error between analytic and retrained influence on sampled pairs.
//!
//! Usage: fd_probe [n] [n_seeds] [grad_tol] [error_rate] [int]

use std::time::Instant;

use strata_core::data::mislabel;
use strata_core::influence::{influence_fd_oracle, influence_matrix_at};
use strata_core::model::{train, TrainConfig};
use strata_core::theory::{lemma_instance, theorem_instance};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(50);
    let n_seeds: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(20);
    let grad_tol: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1e-8);
    let error_rate: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.0);
    let cfg = TrainConfig {
        ridge: 0.0,
        epochs: 0,
        grad_tol,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    for seed in 0..n_seeds {
        let integer = args.get(5).map(|s| s == "int").unwrap_or(false);
        let mut ds = if integer {
            lemma_instance(n, seed).unwrap()
        } else {
            theorem_instance(n, seed).unwrap()
        };
        if error_rate > 0.0 {
            ds = mislabel(&ds, error_rate, seed ^ 0xA5A5).unwrap().0;
        }
        let fit = match train(&ds, &cfg) {
            Ok(f) => f,
            Err(e) => {
                println!("seed {seed}: train failed: {e}");
                continue;
            }
        };
        let norm = fit
            .params
            .theta
            .iter()
            .map(|t| t * t)
            .sum::<f64>()
            .sqrt();
        let x = influence_matrix_at(&ds, &fit.params).unwrap();
        let mut worst = 0.0_f64;
        let mut worst_pair = (0, 0);
        for (zi, zj) in [(1usize, 8usize), (14, 22), (3, 40), (27, 33), (10, 49)] {
            let h: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(1e-4);
            let rich = influence_fd_oracle(zi, zj, &ds, &cfg, &fit, h).and_then(|d1| {
                let d2 = influence_fd_oracle(zi, zj, &ds, &cfg, &fit, h / 2.0)?;
                Ok((4.0 * d2 - d1) / 3.0)
            });
            match rich {
                Ok(fd) => {
                    let a = x.get(zj, zi);
                    let rel = (fd - a).abs() / fd.abs().max(1e-12);
                    if rel > worst {
                        worst = rel;
                        worst_pair = (zi, zj);
                    }
                }
                Err(e) => {
                    println!("seed {seed}: fd failed at ({zi},{zj}): {e}");
                    worst = f64::INFINITY;
                }
            }
        }
        println!(
            "seed {seed}: grad {:.2e} |theta| {:8.2} loss {:.3e} worst rel {:.3e} at {:?}",
            fit.grad_norm, norm, fit.final_loss, worst, worst_pair
        );
    }
    println!("elapsed: {:.1?}", t0.elapsed());
}
