//! The pairwise influence random variable, its moments, and the second-order
//! cross-derivatives.
//!
//! For a trained minimizer θ̂ with Hessian `H`, the influence of up-weighting
//! training point `z` on the loss at `z'` has the closed form
//! `−∇L(z',θ̂)ᵀ H⁻¹ ∇L(z,θ̂)`, which is symmetric in `z` and `z'`. Collecting
//! the values over all unordered distinct pairs yields a random variable
//! whose raw moments and variance summarize the whole training set.

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{DataPoint, Dataset, PointId};
use crate::error::{Error, Result};
use crate::linalg::{factor_hessian, HessianFactor};
use crate::model::{
    self, hessian_vector_product, loss_gradient, loss_hessian, FitResult, ModelParams,
    TrainConfig,
};

/// Symmetric n×n matrix of pairwise influence values. The diagonal is stored
/// (it feeds the mean identity) but excluded from all moments.
#[derive(Debug, Clone)]
pub struct InfluenceMatrix {
    values: Array2<f64>,
    point_ids: Vec<PointId>,
}

impl InfluenceMatrix {
    pub(crate) fn from_parts(values: Array2<f64>, point_ids: Vec<PointId>) -> Self {
        InfluenceMatrix { values, point_ids }
    }

    pub fn n(&self) -> usize {
        self.point_ids.len()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn point_ids(&self) -> &[PointId] {
        &self.point_ids
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }
}

/// Raw moments `E[Xᵏ]` and variance of the influence variable.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub n: usize,
    pub k_max: usize,
    pub raw_moments: Vec<f64>,
    pub variance: f64,
    #[serde(skip)]
    pub n_pairs: usize,
}

impl MomentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("moment report serializes")
    }
}

/// `−g_zpᵀ H⁻¹ g_z` via the factor.
pub fn influence_pair(
    g_z: ArrayView1<f64>,
    g_zp: ArrayView1<f64>,
    factor: &HessianFactor,
) -> f64 {
    -g_zp.dot(&factor.solve(g_z))
}

/// Gradient matrix G (n×m) of the dataset at the given parameters.
pub(crate) fn gradient_matrix(ds: &Dataset, params: &ModelParams) -> Result<Array2<f64>> {
    let mut g = Array2::<f64>::zeros((ds.len(), params.m()));
    for (i, z) in ds.points().iter().enumerate() {
        g.row_mut(i).assign(&loss_gradient(z, params)?);
    }
    Ok(g)
}

/// Assembles the full influence matrix: n solves `S = H⁻¹Gᵀ`, then
/// `X = −G·S` with each unordered pair computed once and mirrored.
pub fn influence_matrix(ds: &Dataset, fit: &FitResult) -> Result<InfluenceMatrix> {
    influence_matrix_at(ds, &fit.params)
}

/// Same as [`influence_matrix`] but for explicit parameters (used for
/// reduced-set evaluations where the Hessian normalization is rescaled by the
/// caller).
pub fn influence_matrix_at(ds: &Dataset, params: &ModelParams) -> Result<InfluenceMatrix> {
    if ds.len() < 2 {
        return Err(Error::DatasetTooSmall {
            min: 2,
            have: ds.len(),
        });
    }
    let g = gradient_matrix(ds, params)?;
    let h = loss_hessian(ds, params)?;
    let factor = factor_hessian(&h)?;
    let n = ds.len();

    // Solve column-wise; each column is independent.
    let columns: Vec<Array1<f64>> = (0..n)
        .into_par_iter()
        .map(|j| factor.solve(g.row(j)))
        .collect();

    let mut values = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let x = -g.row(i).dot(&columns[j]);
            values[[i, j]] = x;
            values[[j, i]] = x;
        }
    }
    Ok(InfluenceMatrix {
        values,
        point_ids: ds.ids().to_vec(),
    })
}

/// Raw moments over unordered distinct pairs, accumulated in a fixed
/// row-major order with compensated summation.
pub fn moments(x: &InfluenceMatrix, k_max: usize) -> Result<MomentReport> {
    let n = x.n();
    if n < 2 {
        return Err(Error::DatasetTooSmall { min: 2, have: n });
    }
    if k_max < 2 {
        return Err(Error::invalid("k_max", "must be >= 2"));
    }
    let n_pairs = n * (n - 1) / 2;
    let mut sums = vec![KahanSum::default(); k_max];
    for i in 0..n {
        for j in i + 1..n {
            let v = x.get(i, j);
            let mut power = v;
            for sum in sums.iter_mut() {
                sum.add(power);
                power *= v;
            }
        }
    }
    let raw_moments: Vec<f64> = sums.iter().map(|s| s.value() / n_pairs as f64).collect();
    let variance = raw_moments[1] - raw_moments[0] * raw_moments[0];
    Ok(MomentReport {
        n,
        k_max,
        raw_moments,
        variance,
        n_pairs,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let y = v - self.compensation;
        let t = self.sum + y;
        self.compensation = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Precomputed state for evaluating `∂²/(∂ε_y ∂ε_z) L(z',θ̂)` across many
/// third points `y` for one fixed `(z', z)` pair.
pub struct CrossDerivativeRow<'a> {
    ds: &'a Dataset,
    params: &'a ModelParams,
    /// H⁻¹ (∇²L(z')·H⁻¹∇L(z)), dotted with ∇L(y) for the first term.
    w_first: Array1<f64>,
    /// H⁻¹∇L(z'), the left slot of the second term's bilinear form.
    a: Array1<f64>,
    /// H⁻¹∇L(z), the right slot of the second term's bilinear form.
    b: Array1<f64>,
    /// H⁻¹ (∇²L(z)·H⁻¹∇L(z')), dotted with ∇L(y) for the third term.
    w_third: Array1<f64>,
}

impl<'a> CrossDerivativeRow<'a> {
    pub fn new(zp: &DataPoint, z: &DataPoint, ds: &'a Dataset, params: &'a ModelParams) -> Result<Self> {
        let h = loss_hessian(ds, params)?;
        let factor = factor_hessian(&h)?;
        let g_zp = loss_gradient(zp, params)?;
        let g_z = loss_gradient(z, params)?;
        let a = factor.solve(g_zp.view()); // H⁻¹∇L(z')
        let b = factor.solve(g_z.view()); // H⁻¹∇L(z)
        let w_first = factor.solve(hessian_vector_product(zp, params, b.view())?.view());
        let w_third = factor.solve(hessian_vector_product(z, params, a.view())?.view());
        Ok(CrossDerivativeRow {
            ds,
            params,
            w_first,
            a,
            b,
            w_third,
        })
    }

    /// Evaluates the three-term closed form at the third point `y`.
    ///
    /// term 1: `−⟨∂/∂ε_z ∇L(z'), ∇L(y)⟩` with
    /// `∂/∂ε_z ∇L(z') = −∇²L(z')·H⁻¹∇L(z)`;
    /// term 2: `⟨∇L(z'), ∇²L(y)·H⁻¹∇L(z)⟩`;
    /// term 3: `⟨∇L(z'), ∇²L(z)·H⁻¹∇L(y)⟩`;
    /// all in the bilinear form `⟨v,w⟩ = vᵀH⁻¹w`.
    pub fn eval(&self, y: &DataPoint) -> Result<f64> {
        let g_y = loss_gradient(y, self.params)?;
        let term1 = self.w_first.dot(&g_y);
        let term2 = self
            .a
            .dot(&hessian_vector_product(y, self.params, self.b.view())?);
        let term3 = self.w_third.dot(&g_y);
        Ok(term1 + term2 + term3)
    }

    pub fn ds(&self) -> &Dataset {
        self.ds
    }
}

/// `∂²/(∂ε_y ∂ε_z) L(z', θ̂)` at the trained optimum, via the three-term
/// closed form.
pub fn cross_derivative(
    zp: &DataPoint,
    z: &DataPoint,
    y: &DataPoint,
    ds: &Dataset,
    fit: &FitResult,
) -> Result<f64> {
    let row = CrossDerivativeRow::new(zp, z, ds, &fit.params)?;
    row.eval(y)
}

/// Finite-difference oracle for the influence: re-minimizes the deformed
/// objective `f_Z + ε·L(z,·)` at `ε = ±h` and returns the central quotient
/// `[L(z',θ̂₊) − L(z',θ̂₋)]/(2h)`.
pub fn influence_fd_oracle(
    z_index: usize,
    zp_index: usize,
    ds: &Dataset,
    cfg: &TrainConfig,
    fit: &FitResult,
    h: f64,
) -> Result<f64> {
    if !(1e-6..=1e-2).contains(&h) {
        return Err(Error::invalid("h", "step must lie in [1e-6, 1e-2]"));
    }
    let n = ds.len() as f64;
    let zp = ds.point(zp_index);
    let loss_at = |eps: f64| -> Result<f64> {
        let mut weights = vec![1.0 / n; ds.len()];
        weights[z_index] += eps;
        let (params, _, _, _) = model::newton_minimize(
            ds,
            &weights,
            fit.params.clone(),
            cfg.ridge,
            (cfg.grad_tol * 1e-2).max(1e-12),
        )?;
        model::per_point_loss(zp, &params)
    };
    let plus = loss_at(h)?;
    let minus = loss_at(-h)?;
    Ok((plus - minus) / (2.0 * h))
}
