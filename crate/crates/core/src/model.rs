//! Multinomial logistic regression with exact first and second derivatives.
//!
//! The trained objective is the mean softmax cross-entropy plus an optional
//! ridge term `(λ/2)‖θ‖²` attached to the total loss (not to the per-point
//! loss). Training runs seeded mini-batch ADAM followed by damped Newton
//! refinement down to a strict gradient tolerance, so the stationarity-based
//! influence identities hold numerically at the returned parameters.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::dataset::{DataPoint, Dataset};
use crate::error::{Error, Result};
use crate::linalg::factor_hessian;

/// Dense Hessians beyond this dimension are refused up front.
pub const MAX_HESSIAN_DIM: usize = 8192;

const NEWTON_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Ridge strength λ ≥ 0, applied to the total loss.
    pub ridge: f64,
    pub grad_tol: f64,
    pub newton_refine: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 50,
            ridge: 1e-3,
            grad_tol: 1e-8,
            newton_refine: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning_rate", "must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be >= 1"));
        }
        if self.grad_tol <= 0.0 {
            return Err(Error::invalid("grad_tol", "must be > 0"));
        }
        if self.ridge < 0.0 {
            return Err(Error::invalid("ridge", "must be >= 0"));
        }
        Ok(())
    }
}

/// MLR parameters: one weight row per class with a trailing bias column,
/// flattened row-major to length `m = C·(d+1)` for Hessian purposes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub theta: Array2<f64>,
    pub ridge: f64,
}

impl ModelParams {
    pub fn zeros(n_classes: usize, dim: usize, ridge: f64) -> Self {
        ModelParams {
            theta: Array2::zeros((n_classes, dim + 1)),
            ridge,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.theta.nrows()
    }

    pub fn dim(&self) -> usize {
        self.theta.ncols() - 1
    }

    /// Flattened parameter count.
    pub fn m(&self) -> usize {
        self.theta.len()
    }

    fn check_point(&self, z: &DataPoint) -> Result<()> {
        if z.features.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.features.len(),
            });
        }
        if z.label >= self.n_classes() {
            return Err(Error::invalid(
                "label",
                format!("label {} out of range", z.label),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ModelParams,
    pub final_loss: f64,
    pub grad_norm: f64,
    pub epochs_run: usize,
}

/// Class log-probabilities under the model, computed with the usual
/// log-sum-exp shift.
fn log_softmax(z: &DataPoint, params: &ModelParams) -> Array1<f64> {
    let c = params.n_classes();
    let mut logits = Array1::<f64>::zeros(c);
    for k in 0..c {
        let row = params.theta.row(k);
        let mut dot = row[params.dim()]; // bias
        for (j, &x) in z.features.iter().enumerate() {
            if x != 0.0 {
                dot += row[j] * x;
            }
        }
        logits[k] = dot;
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_norm = logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    logits.mapv_inplace(|v| v - log_norm);
    logits
}

fn softmax_probs(z: &DataPoint, params: &ModelParams) -> Array1<f64> {
    log_softmax(z, params).mapv(f64::exp)
}

/// Softmax cross-entropy of one point. Pure cross-entropy: the ridge term
/// belongs to the total loss only.
pub fn per_point_loss(z: &DataPoint, params: &ModelParams) -> Result<f64> {
    params.check_point(z)?;
    Ok(-log_softmax(z, params)[z.label])
}

/// Mean cross-entropy over the dataset plus `(λ/2)‖θ‖²`.
pub fn total_loss(ds: &Dataset, params: &ModelParams) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sum = 0.0;
    for z in ds.points() {
        sum += per_point_loss(z, params)?;
    }
    let ridge = 0.5 * params.ridge * params.theta.iter().map(|t| t * t).sum::<f64>();
    Ok(sum / ds.len() as f64 + ridge)
}

/// Exact gradient of [`per_point_loss`], flattened to length `m`:
/// `(softmax − onehot) ⊗ [x; 1]`.
pub fn loss_gradient(z: &DataPoint, params: &ModelParams) -> Result<Array1<f64>> {
    params.check_point(z)?;
    let c = params.n_classes();
    let width = params.dim() + 1;
    let p = softmax_probs(z, params);
    let mut g = Array1::<f64>::zeros(c * width);
    for k in 0..c {
        let coef = p[k] - if k == z.label { 1.0 } else { 0.0 };
        let base = k * width;
        for (j, &x) in z.features.iter().enumerate() {
            if x != 0.0 {
                g[base + j] = coef * x;
            }
        }
        g[base + params.dim()] = coef;
    }
    Ok(g)
}

/// Per-point Hessian-vector product `∇²L(z,θ)·v` without forming the matrix.
///
/// With `K = diag(p) − p pᵀ` and `x̃ = [x; 1]`, the per-point Hessian is
/// `K ⊗ x̃x̃ᵀ`, so the product is `(K·(V x̃)) ⊗ x̃` for `v` reshaped to `V`.
pub fn hessian_vector_product(
    z: &DataPoint,
    params: &ModelParams,
    v: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    params.check_point(z)?;
    let c = params.n_classes();
    let d = params.dim();
    let width = d + 1;
    if v.len() != c * width {
        return Err(Error::DimensionMismatch {
            expected: c * width,
            got: v.len(),
        });
    }
    let p = softmax_probs(z, params);
    // y_k = V_k · x̃
    let mut y = Array1::<f64>::zeros(c);
    for k in 0..c {
        let base = k * width;
        let mut dot = v[base + d];
        for (j, &x) in z.features.iter().enumerate() {
            if x != 0.0 {
                dot += v[base + j] * x;
            }
        }
        y[k] = dot;
    }
    // u = K y
    let py = p.dot(&y);
    let u = Array1::from_shape_fn(c, |k| p[k] * (y[k] - py));
    let mut out = Array1::<f64>::zeros(c * width);
    for k in 0..c {
        let base = k * width;
        for (j, &x) in z.features.iter().enumerate() {
            if x != 0.0 {
                out[base + j] = u[k] * x;
            }
        }
        out[base + d] = u[k];
    }
    Ok(out)
}

/// `aᵀ · ∇²L(z,θ) · b` without forming the per-point Hessian.
pub fn hessian_bilinear(
    z: &DataPoint,
    params: &ModelParams,
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
) -> Result<f64> {
    let hb = hessian_vector_product(z, params, b)?;
    Ok(a.dot(&hb))
}

/// Dense per-point Hessian `K ⊗ x̃x̃ᵀ` (no ridge). Used by oracles and small
/// instances only.
pub fn per_point_hessian(z: &DataPoint, params: &ModelParams) -> Result<Array2<f64>> {
    params.check_point(z)?;
    let c = params.n_classes();
    let d = params.dim();
    let width = d + 1;
    let m = c * width;
    if m > MAX_HESSIAN_DIM {
        return Err(Error::HessianTooLarge {
            m,
            max: MAX_HESSIAN_DIM,
        });
    }
    let p = softmax_probs(z, params);
    let mut xt = z.features.clone();
    xt.push(1.0);
    let nz: Vec<usize> = (0..width).filter(|&j| xt[j] != 0.0).collect();
    let mut h = Array2::<f64>::zeros((m, m));
    for k in 0..c {
        for l in 0..c {
            let coef = if k == l {
                p[k] * (1.0 - p[k])
            } else {
                -p[k] * p[l]
            };
            if coef == 0.0 {
                continue;
            }
            for &j in &nz {
                for &q in &nz {
                    h[[k * width + j, l * width + q]] += coef * xt[j] * xt[q];
                }
            }
        }
    }
    Ok(h)
}

/// Exact Hessian of [`total_loss`]: `(1/n) Σ ∇²L(z,θ) + λI`.
pub fn loss_hessian(ds: &Dataset, params: &ModelParams) -> Result<Array2<f64>> {
    let weights = vec![1.0 / ds.len() as f64; ds.len()];
    weighted_hessian(ds, &weights, params, params.ridge)
}

/// Hessian of `Σ w_i L(z_i,θ) + (ridge/2)‖θ‖²`.
pub(crate) fn weighted_hessian(
    ds: &Dataset,
    weights: &[f64],
    params: &ModelParams,
    ridge: f64,
) -> Result<Array2<f64>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let c = params.n_classes();
    let d = params.dim();
    let width = d + 1;
    let m = c * width;
    if m > MAX_HESSIAN_DIM {
        return Err(Error::HessianTooLarge {
            m,
            max: MAX_HESSIAN_DIM,
        });
    }
    let mut h = Array2::<f64>::zeros((m, m));
    let mut xt = vec![0.0f64; width];
    for (z, &w) in ds.points().iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        params.check_point(z)?;
        xt[..d].copy_from_slice(&z.features);
        xt[d] = 1.0;
        let nz: Vec<usize> = (0..width).filter(|&j| xt[j] != 0.0).collect();
        let p = softmax_probs(z, params);
        for k in 0..c {
            for l in 0..c {
                let coef = w * if k == l {
                    p[k] * (1.0 - p[k])
                } else {
                    -p[k] * p[l]
                };
                if coef == 0.0 {
                    continue;
                }
                for &j in &nz {
                    let row = k * width + j;
                    let scaled = coef * xt[j];
                    for &q in &nz {
                        h[[row, l * width + q]] += scaled * xt[q];
                    }
                }
            }
        }
    }
    if ridge > 0.0 {
        for i in 0..m {
            h[[i, i]] += ridge;
        }
    }
    Ok(h)
}

/// Gradient of `Σ w_i L(z_i,θ) + (ridge/2)‖θ‖²`.
pub(crate) fn weighted_gradient(
    ds: &Dataset,
    weights: &[f64],
    params: &ModelParams,
    ridge: f64,
) -> Result<Array1<f64>> {
    let mut g = Array1::<f64>::zeros(params.m());
    for (z, &w) in ds.points().iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        g.scaled_add(w, &loss_gradient(z, params)?);
    }
    if ridge > 0.0 {
        for (gi, ti) in g.iter_mut().zip(params.theta.iter()) {
            *gi += ridge * ti;
        }
    }
    Ok(g)
}

pub(crate) fn weighted_loss(
    ds: &Dataset,
    weights: &[f64],
    params: &ModelParams,
    ridge: f64,
) -> Result<f64> {
    let mut sum = 0.0;
    for (z, &w) in ds.points().iter().zip(weights) {
        if w != 0.0 {
            sum += w * per_point_loss(z, params)?;
        }
    }
    Ok(sum + 0.5 * ridge * params.theta.iter().map(|t| t * t).sum::<f64>())
}

fn reshape_to_theta(flat: ArrayView1<f64>, c: usize, width: usize) -> Array2<f64> {
    Array2::from_shape_vec((c, width), flat.to_vec()).expect("shape")
}

/// Damped Newton minimization of `Σ w_i L_i + (ridge/2)‖θ‖²` starting at
/// `params`, down to gradient norm `tol`.
pub(crate) fn newton_minimize(
    ds: &Dataset,
    weights: &[f64],
    mut params: ModelParams,
    ridge: f64,
    tol: f64,
) -> Result<(ModelParams, f64, f64, usize)> {
    let c = params.n_classes();
    let width = params.dim() + 1;
    let mut loss = weighted_loss(ds, weights, &params, ridge)?;
    let mut grad = weighted_gradient(ds, weights, &params, ridge)?;
    let mut grad_norm = grad.dot(&grad).sqrt();
    let mut iters = 0;
    while grad_norm > tol {
        if iters >= NEWTON_MAX_ITERS {
            return Err(Error::NoConvergence {
                grad_norm,
                iterations: iters,
                tolerance: tol,
            });
        }
        let h = weighted_hessian(ds, weights, &params, ridge)?;
        let factor = factor_hessian(&h)?;
        let direction = -factor.solve(grad.view());
        let slope = grad.dot(&direction);
        // Armijo backtracking; the direction is a descent direction since the
        // (jittered) factor is positive definite.
        let mut step = 1.0;
        let theta_flat: Array1<f64> = Array1::from_iter(params.theta.iter().cloned());
        loop {
            let candidate_flat = &theta_flat + &(step * &direction);
            let candidate = ModelParams {
                theta: reshape_to_theta(candidate_flat.view(), c, width),
                ridge: params.ridge,
            };
            let candidate_loss = weighted_loss(ds, weights, &candidate, ridge)?;
            if candidate_loss.is_finite() && candidate_loss <= loss + 1e-4 * step * slope {
                params = candidate;
                loss = candidate_loss;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                // Cannot make progress along this direction; accept the point
                // only if the gradient already meets a relaxed tolerance.
                return Err(Error::NoConvergence {
                    grad_norm,
                    iterations: iters,
                    tolerance: tol,
                });
            }
        }
        grad = weighted_gradient(ds, weights, &params, ridge)?;
        grad_norm = grad.dot(&grad).sqrt();
        iters += 1;
    }
    Ok((params, loss, grad_norm, iters))
}

/// Trains from zero: seeded mini-batch ADAM for `cfg.epochs`, then (if
/// configured) Newton refinement to `cfg.grad_tol`.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<FitResult> {
    cfg.validate()?;
    if ds.len() < ds.n_classes() {
        return Err(Error::DatasetTooSmall {
            min: ds.n_classes(),
            have: ds.len(),
        });
    }
    let params = ModelParams::zeros(ds.n_classes(), ds.dim(), cfg.ridge);
    train_from(ds, cfg, params)
}

/// Trains starting from the given parameters (warm start).
pub fn train_from(ds: &Dataset, cfg: &TrainConfig, mut params: ModelParams) -> Result<FitResult> {
    cfg.validate()?;
    params.ridge = cfg.ridge;
    let n = ds.len();
    let c = params.n_classes();
    let width = params.dim() + 1;
    let m = c * width;

    // ADAM state
    let mut first = Array1::<f64>::zeros(m);
    let mut second = Array1::<f64>::zeros(m);
    let (beta1, beta2, eps) = (0.9, 0.999, 1e-8);
    let mut step_count = 0u64;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = Array1::<f64>::zeros(m);
            for &i in batch {
                grad += &loss_gradient(ds.point(i), &params)?;
            }
            grad /= batch.len() as f64;
            if cfg.ridge > 0.0 {
                for (gi, ti) in grad.iter_mut().zip(params.theta.iter()) {
                    *gi += cfg.ridge * ti;
                }
            }
            step_count += 1;
            first.zip_mut_with(&grad, |f, &g| *f = beta1 * *f + (1.0 - beta1) * g);
            second.zip_mut_with(&grad, |s, &g| *s = beta2 * *s + (1.0 - beta2) * g * g);
            let bias1 = 1.0 - beta1.powi(step_count as i32);
            let bias2 = 1.0 - beta2.powi(step_count as i32);
            let mut flat: Vec<f64> = params.theta.iter().cloned().collect();
            for i in 0..m {
                let mhat = first[i] / bias1;
                let vhat = second[i] / bias2;
                flat[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + eps);
            }
            params.theta = Array2::from_shape_vec((c, width), flat).expect("shape");
        }
    }

    let weights = vec![1.0 / n as f64; n];
    if cfg.newton_refine {
        let (refined, loss, grad_norm, _) =
            newton_minimize(ds, &weights, params, cfg.ridge, cfg.grad_tol)?;
        Ok(FitResult {
            params: refined,
            final_loss: loss,
            grad_norm,
            epochs_run: cfg.epochs,
        })
    } else {
        let loss = weighted_loss(ds, &weights, &params, cfg.ridge)?;
        let grad = weighted_gradient(ds, &weights, &params, cfg.ridge)?;
        Ok(FitResult {
            grad_norm: grad.dot(&grad).sqrt(),
            final_loss: loss,
            params,
            epochs_run: cfg.epochs,
        })
    }
}

/// Fraction of points whose arg-max softmax matches the label. Ties break to
/// the lowest class index.
pub fn predict_accuracy(ds: &Dataset, params: &ModelParams) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for z in ds.points() {
        params.check_point(z)?;
        let logp = log_softmax(z, params);
        let mut best = 0usize;
        for k in 1..logp.len() {
            if logp[k] > logp[best] {
                best = k;
            }
        }
        if best == z.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}
