//! Dense Cholesky factorization with escalating diagonal jitter.
//!
//! Inverse-Hessian-vector products are always realized as factor-and-solve;
//! the inverse itself is never formed. When the Hessian is only positive
//! semi-definite (the unregularized softmax Hessian has an exact null space)
//! the factorization succeeds with a small diagonal jitter, and solves are
//! polished by iterative refinement against the original matrix so that
//! `H * solve(v) = v` holds to working accuracy for any `v` in the range of
//! `H`.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_CAP: f64 = 1e-4;
const REFINEMENT_STEPS: usize = 2;

/// Lower-triangular Cholesky factor of a (possibly jittered) symmetric
/// matrix.
#[derive(Debug, Clone)]
pub struct HessianFactor {
    lower: Array2<f64>,
    /// Original matrix, kept for iterative refinement when jitter was needed.
    matrix: Option<Array2<f64>>,
    m: usize,
    jitter_used: f64,
}

/// Factors a symmetric matrix, escalating diagonal jitter by factors of 10
/// from `1e-10` to `1e-4` if the plain factorization fails.
pub fn factor_hessian(h: &Array2<f64>) -> Result<HessianFactor> {
    assert_eq!(h.nrows(), h.ncols(), "hessian must be square");
    let m = h.nrows();

    let mut jitter = 0.0;
    loop {
        match try_cholesky(h, jitter) {
            Ok(lower) => {
                let matrix = if jitter > 0.0 { Some(h.clone()) } else { None };
                return Ok(HessianFactor {
                    lower,
                    matrix,
                    m,
                    jitter_used: jitter,
                });
            }
            Err(pivot) => {
                jitter = if jitter == 0.0 {
                    JITTER_START
                } else {
                    jitter * 10.0
                };
                if jitter > JITTER_CAP {
                    return Err(Error::IndefiniteHessian {
                        jitter: JITTER_CAP,
                        min_eigenvalue: pivot,
                    });
                }
            }
        }
    }
}

/// Plain lower Cholesky of `h + jitter*I`. On failure returns the offending
/// pivot value, a cheap lower bound estimate of the smallest eigenvalue.
fn try_cholesky(h: &Array2<f64>, jitter: f64) -> std::result::Result<Array2<f64>, f64> {
    let m = h.nrows();
    let mut l = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        for j in 0..=i {
            let mut sum = h[[i, j]];
            if i == j {
                sum += jitter;
            }
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(sum);
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

impl HessianFactor {
    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// Solves `H x = v`.
    ///
    /// With a jittered factor the raw triangular solves invert `H + δI`;
    /// iterative refinement against the stored `H` removes the `O(δ)` bias,
    /// converging to the minimum-norm solution for consistent systems.
    pub fn solve(&self, v: ArrayView1<f64>) -> Array1<f64> {
        assert_eq!(v.len(), self.m, "rhs length must match factor dimension");
        let mut x = self.solve_triangular(v);
        if let Some(h) = &self.matrix {
            for _ in 0..REFINEMENT_STEPS {
                let residual = &v.to_owned() - &h.dot(&x);
                x = &x + &self.solve_triangular(residual.view());
            }
        }
        x
    }

    fn solve_triangular(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let m = self.m;
        let l = &self.lower;
        // forward: L y = v
        let mut y = Array1::<f64>::zeros(m);
        for i in 0..m {
            let mut sum = v[i];
            for k in 0..i {
                sum -= l[[i, k]] * y[k];
            }
            y[i] = sum / l[[i, i]];
        }
        // backward: L^T x = y
        let mut x = Array1::<f64>::zeros(m);
        for i in (0..m).rev() {
            let mut sum = y[i];
            for k in i + 1..m {
                sum -= l[[k, i]] * x[k];
            }
            x[i] = sum / l[[i, i]];
        }
        x
    }
}
