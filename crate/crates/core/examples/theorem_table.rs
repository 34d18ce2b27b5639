//! Prints the exhaustive theorem-check table for the standard instance
//! family. Used to eyeball residual decay and to calibrate the frozen
//! tolerance constants.

use strata_core::theory::{
    corollary_search, frozen, moment_drop, theorem_instance, theorem_train_cfg, variance_drop,
};

fn main() {
    let cfg = theorem_train_cfg();
    println!(
        "{:>3} {:>2} {:>2} {:<9} {:>12} {:>12} {:>12} {:>12}",
        "n", "s", "k", "norm", "lhs", "rhs", "residual", "resid*n^2"
    );
    for n in [20usize, 30, 40, 60] {
        let ds = theorem_instance(n, frozen::instance_seed(n)).expect("instance");
        for s in [1usize, 2] {
            if s == 2 && n > 40 {
                continue;
            }
            for k in [1usize, 2] {
                match moment_drop(&ds, s, k, &cfg) {
                    Ok(reports) => {
                        for r in reports {
                            println!(
                                "{:>3} {:>2} {:>2} {:<9} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
                                r.n,
                                r.s,
                                r.k,
                                format!("{:?}", r.normalization),
                                r.lhs,
                                r.rhs_theory,
                                r.residual,
                                r.residual * (r.n * r.n) as f64
                            );
                        }
                    }
                    Err(e) => println!("{n} {s} {k} moment FAILED: {e}"),
                }
            }
            match variance_drop(&ds, s, &cfg) {
                Ok(reports) => {
                    for r in reports {
                        println!(
                            "{:>3} {:>2}  V {:<9} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
                            r.n,
                            r.s,
                            format!("{:?}", r.normalization),
                            r.lhs,
                            r.rhs_theory,
                            r.residual,
                            r.residual * (r.n * r.n) as f64
                        );
                    }
                }
                Err(e) => println!("{n} {s} variance FAILED: {e}"),
            }
            match corollary_search(&ds, s, &cfg) {
                Ok((ids, drop)) => println!("{n} {s}  corollary best drop {drop:.4e} at {ids:?}"),
                Err(e) => println!("{n} {s} corollary FAILED: {e}"),
            }
        }
    }
}
