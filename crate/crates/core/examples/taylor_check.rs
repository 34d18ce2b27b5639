//! Checks the first-order deformation expansion behind the drop identities:
//! for M = {y}, the per-pair change X_u(η_M) − X_u(0) should match
//! −(1/n)·∂²/(∂ε_y ∂ε_z) L(z', θ̂) up to O(n⁻²) terms.
//!
//! Usage: taylor_check [n] [seed] [ridge]

use ndarray::{Array1, Array2};
use strata_core::linalg::factor_hessian;
use strata_core::model::{
    hessian_vector_product, loss_gradient, loss_hessian, train, ModelParams,
};
use strata_core::theory::{theorem_instance, theorem_train_cfg};
use strata_core::Dataset;

fn ridge_gradients(ds: &Dataset, params: &ModelParams) -> Vec<Array1<f64>> {
    let theta_flat = Array1::from_iter(params.theta.iter().cloned());
    ds.points()
        .iter()
        .map(|z| {
            let mut g = loss_gradient(z, params).unwrap();
            g.scaled_add(params.ridge, &theta_flat);
            g
        })
        .collect()
}

fn influence(ds: &Dataset, params: &ModelParams) -> Array2<f64> {
    let n = ds.len();
    let h = loss_hessian(ds, params).unwrap();
    let factor = factor_hessian(&h).unwrap();
    let g = ridge_gradients(ds, params);
    let solved: Vec<Array1<f64>> = g.iter().map(|gi| factor.solve(gi.view())).collect();
    let mut x = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            x[[i, j]] = -g[i].dot(&solved[j]);
        }
    }
    x
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(30);
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0);
    let mut cfg = theorem_train_cfg();
    if let Some(r) = args.get(3) {
        cfg.ridge = r.parse().unwrap();
    }
    let ds = theorem_instance(n, seed).unwrap();
    let fit = train(&ds, &cfg).unwrap();
    let params = &fit.params;
    let nf = n as f64;

    let x0 = influence(&ds, params);
    let h = loss_hessian(&ds, params).unwrap();
    let factor = factor_hessian(&h).unwrap();
    let g = ridge_gradients(&ds, params);
    let solved: Vec<Array1<f64>> = g.iter().map(|gi| factor.solve(gi.view())).collect();

    // ridge-aware per-point hessian-vector product: (∇²CE(p) + λI)·v
    let hvp = |p: usize, v: &Array1<f64>| -> Array1<f64> {
        let mut out = hessian_vector_product(ds.point(p), params, v.view()).unwrap();
        out.scaled_add(params.ridge, v);
        out
    };
    // ∂²/(∂ε_y ∂ε_z) L(z',θ̂) for indices (zp, z, y)
    let cross = |zp: usize, z: usize, y: usize| -> f64 {
        let t1 = factor.solve(hvp(zp, &solved[z]).view()).dot(&g[y]);
        let t2 = solved[zp].dot(&hvp(y, &solved[z]));
        let t3 = factor.solve(hvp(z, &solved[zp]).view()).dot(&g[y]);
        t1 + t2 + t3
    };

    let y = 0usize;
    let ids = ds.ids().to_vec();
    let reduced = ds.remove_ids(&[ids[y]]).unwrap();
    let red_fit = train(&reduced, &cfg).unwrap();
    let xf = influence(&reduced, &red_fit.params);
    let scale = nf / (nf - 1.0);

    println!("n={n} seed={seed} ridge={} |theta|={:.3}", cfg.ridge, {
        params.theta.iter().map(|t| t * t).sum::<f64>().sqrt()
    });
    println!("pair (i,j)   X_u0        X_uM        actual dX    taylor dX   ratio");
    let mut worst: f64 = 0.0;
    for (i, j) in [(1usize, 2usize), (3, 7), (5, 12), (10, 20), (4, 25)] {
        // reduced indices shift down by one past y = 0
        let xm = scale * xf[[i - 1, j - 1]];
        let actual = xm - x0[[i, j]];
        let taylor = -cross(j, i, y) / nf;
        println!(
            "({i:>2},{j:>2})   {:+.5e} {:+.5e} {:+.5e} {:+.5e} {:+.3}",
            x0[[i, j]],
            xm,
            actual,
            taylor,
            actual / taylor
        );
        worst = worst.max((actual - taylor).abs() * nf * nf);
    }
    println!("max |actual - taylor| * n^2 over shown pairs: {worst:.3e}");
}
