//! Tracks the base-set variance of the pairwise influence as n grows.

use strata_core::influence::moments;
use strata_core::model::train;
use strata_core::theory::{deformation_influence, theorem_instance, theorem_train_cfg};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ridge: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.5);
    let mut cfg = theorem_train_cfg();
    cfg.ridge = ridge;
    for n in [20usize, 40, 80, 160, 320, 640, 1280] {
        for seed in [0u64, 1] {
            let ds = theorem_instance(n, seed).unwrap();
            let fit = train(&ds, &cfg).unwrap();
            let x = deformation_influence(&ds, &fit.params).unwrap();
            let report = moments(&x, 4).unwrap();
            println!(
                "n={n:>5} seed={seed} V={:<10.4e} E[X]={:+.3e} E[X^2]={:.3e} E[X^4]={:.3e}",
                report.variance, report.raw_moments[0], report.raw_moments[1], report.raw_moments[3]
            );
        }
    }
}
