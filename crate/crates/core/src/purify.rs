//! Variance-descent purification.
//!
//! Each iteration scores every remaining training point by how much its
//! removal lowers the influence variance, removes the top scorers, retrains,
//! and records the trajectory. Scoring is either exact (leave-one-out
//! retraining) or approximated from the incumbent influence matrix.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, PointId};
use crate::error::{Error, Result};
use crate::influence::{influence_matrix, moments, KahanSum};
use crate::model::{newton_minimize, predict_accuracy, train, FitResult, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PurifyMethod {
    /// Exact: cold (or warm) retrain per leave-one-out candidate.
    LooRetrain,
    /// Fast path: variance of the incumbent influence matrix with the
    /// candidate's row and column deleted, no retraining.
    InfluenceApprox,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PurifyConfig {
    pub iterations: usize,
    pub remove_per_iter: usize,
    pub method: PurifyMethod,
    pub train_cfg: TrainConfig,
    pub seed: u64,
    /// Warm-start candidate and per-iteration retrains from the incumbent
    /// parameters instead of training from scratch.
    pub warm_start: bool,
}

impl Default for PurifyConfig {
    fn default() -> Self {
        PurifyConfig {
            iterations: 20,
            remove_per_iter: 10,
            method: PurifyMethod::LooRetrain,
            train_cfg: TrainConfig::default(),
            seed: 0,
            warm_start: false,
        }
    }
}

impl PurifyConfig {
    pub fn validate(&self, train_len: usize) -> Result<()> {
        self.train_cfg.validate()?;
        if self.iterations * self.remove_per_iter >= train_len {
            return Err(Error::invalid(
                "iterations",
                format!(
                    "iterations * remove_per_iter = {} must stay below the \
                     training-set size {}",
                    self.iterations * self.remove_per_iter,
                    train_len
                ),
            ));
        }
        Ok(())
    }
}

/// One row of the purification trajectory. `removed_ids` is empty for the
/// initial record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub removed_ids: Vec<PointId>,
    pub variance: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

impl TraceRecord {
    pub fn csv_row(&self) -> String {
        let ids: Vec<String> = self.removed_ids.iter().map(|id| id.to_string()).collect();
        format!(
            "{},{},{:.16e},{:.16e},{:.16e}",
            self.iteration,
            ids.join(";"),
            self.variance,
            self.train_acc,
            self.test_acc
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PurificationTrace {
    pub records: Vec<TraceRecord>,
}

impl PurificationTrace {
    pub const CSV_HEADER: &'static str = "iter,removed_ids,variance,train_acc,test_acc";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        for r in &self.records {
            out.push('\n');
            out.push_str(&r.csv_row());
        }
        out.push('\n');
        out
    }

    /// All ids removed over the whole run, in removal order.
    pub fn removed_ids(&self) -> Vec<PointId> {
        self.records
            .iter()
            .flat_map(|r| r.removed_ids.iter().copied())
            .collect()
    }

    /// (max test accuracy, points removed when it was reached).
    pub fn best_test_accuracy(&self) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        let mut removed = 0;
        for r in &self.records {
            removed += r.removed_ids.len();
            if r.test_acc > best.0 {
                best = (r.test_acc, removed);
            }
        }
        best
    }
}

fn variance_of(ds: &Dataset, fit: &FitResult) -> Result<f64> {
    let x = influence_matrix(ds, fit)?;
    Ok(moments(&x, 2)?.variance)
}

fn fit_set(ds: &Dataset, cfg: &TrainConfig, warm_from: Option<&FitResult>) -> Result<FitResult> {
    match warm_from {
        Some(incumbent) => {
            let n = ds.len();
            let weights = vec![1.0 / n as f64; n];
            let (params, final_loss, grad_norm, epochs_run) = newton_minimize(
                ds,
                &weights,
                incumbent.params.clone(),
                cfg.ridge,
                cfg.grad_tol,
            )?;
            Ok(FitResult {
                params,
                final_loss,
                grad_norm,
                epochs_run,
            })
        }
        None => train(ds, cfg),
    }
}

/// Leave-one-out delta of a single point: `V[A] − V[A∖{z}]`, both variances
/// taken under models retrained from scratch on the respective sets.
pub fn loo_delta(z_id: PointId, a: &Dataset, cfg: &TrainConfig) -> Result<f64> {
    if a.len() < 4 {
        return Err(Error::DatasetTooSmall {
            min: 4,
            have: a.len(),
        });
    }
    a.index_of(z_id)?;
    let base_fit = train(a, cfg)?;
    let base_variance = variance_of(a, &base_fit)?;
    let reduced = a.remove_ids(&[z_id])?;
    let tag = |source: Error| Error::LooCandidate {
        id: z_id,
        source: Box::new(source),
    };
    let fit = train(&reduced, cfg).map_err(tag)?;
    let variance = variance_of(&reduced, &fit).map_err(tag)?;
    Ok(base_variance - variance)
}

/// Leave-one-out deltas of every point against a shared base variance.
fn loo_deltas(
    a: &Dataset,
    base_variance: f64,
    incumbent: &FitResult,
    cfg: &PurifyConfig,
) -> Result<Vec<f64>> {
    let warm = cfg.warm_start.then_some(incumbent);
    (0..a.len())
        .into_par_iter()
        .map(|i| {
            let id = a.id(i);
            let tag = |source: Error| Error::LooCandidate {
                id,
                source: Box::new(source),
            };
            let reduced = a.remove_ids(&[id]).map_err(tag)?;
            let fit = fit_set(&reduced, &cfg.train_cfg, warm).map_err(tag)?;
            let variance = variance_of(&reduced, &fit).map_err(tag)?;
            Ok(base_variance - variance)
        })
        .collect()
}

/// Per-point variance deltas of a fixed symmetric pair-value matrix: entry z
/// is `V[all pairs] − V[pairs avoiding z]`.
pub(crate) fn submatrix_variance_deltas(values: &Array2<f64>) -> Vec<f64> {
    let n = values.nrows();
    let mut s1 = KahanSum::default();
    let mut s2 = KahanSum::default();
    for i in 0..n {
        for j in i + 1..n {
            let v = values[[i, j]];
            s1.add(v);
            s2.add(v * v);
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let full_mean = s1.value() / pairs;
    let full_variance = s2.value() / pairs - full_mean * full_mean;

    let reduced_pairs = ((n - 1) * (n - 2) / 2) as f64;
    (0..n)
        .map(|z| {
            let mut r1 = KahanSum::default();
            let mut r2 = KahanSum::default();
            for j in 0..n {
                if j != z {
                    let v = values[[z, j]];
                    r1.add(v);
                    r2.add(v * v);
                }
            }
            let e1 = (s1.value() - r1.value()) / reduced_pairs;
            let e2 = (s2.value() - r2.value()) / reduced_pairs;
            full_variance - (e2 - e1 * e1)
        })
        .collect()
}

/// Estimates every point's leave-one-out delta without retraining: the
/// influence matrix is computed once under `fit`, and each point's estimate is
/// the variance change from deleting its row and column.
pub fn influence_delta_estimate(a: &Dataset, fit: &FitResult) -> Result<Vec<f64>> {
    if a.len() < 3 {
        return Err(Error::DatasetTooSmall {
            min: 3,
            have: a.len(),
        });
    }
    let x = influence_matrix(a, fit)?;
    Ok(submatrix_variance_deltas(x.values()))
}

/// Top `k` indices by descending delta, ties broken by ascending id. Returns
/// the chosen ids in ascending order.
fn select_removals(a: &Dataset, deltas: &[f64], k: usize) -> Vec<PointId> {
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| {
        deltas[j]
            .partial_cmp(&deltas[i])
            .expect("finite deltas")
            .then(a.id(i).cmp(&a.id(j)))
    });
    let mut chosen: Vec<PointId> = order[..k].iter().map(|&i| a.id(i)).collect();
    chosen.sort_unstable();
    chosen
}

/// Runs the purification loop, invoking `observe` on each trace record as it
/// is produced, so a caller can flush partial traces before a failure.
pub fn purify_observed(
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &PurifyConfig,
    mut observe: impl FnMut(&TraceRecord),
) -> Result<PurificationTrace> {
    cfg.validate(train_set.len())?;
    if train_set.dim() != test_set.dim() {
        return Err(Error::DimensionMismatch {
            expected: train_set.dim(),
            got: test_set.dim(),
        });
    }
    let mut tcfg = cfg.train_cfg.clone();
    tcfg.seed = cfg.seed;
    let loop_cfg = PurifyConfig {
        train_cfg: tcfg.clone(),
        ..cfg.clone()
    };

    let mut current = train_set.clone();
    let mut fit = train(&current, &tcfg)?;
    let mut variance = variance_of(&current, &fit)?;

    let mut records = Vec::with_capacity(cfg.iterations + 1);
    let mut push = |records: &mut Vec<TraceRecord>,
                    iteration: usize,
                    removed_ids: Vec<PointId>,
                    variance: f64,
                    current: &Dataset,
                    fit: &FitResult|
     -> Result<()> {
        let record = TraceRecord {
            iteration,
            removed_ids,
            variance,
            train_acc: predict_accuracy(current, &fit.params)?,
            test_acc: predict_accuracy(test_set, &fit.params)?,
        };
        observe(&record);
        records.push(record);
        Ok(())
    };
    push(&mut records, 0, Vec::new(), variance, &current, &fit)?;

    for iteration in 1..=cfg.iterations {
        let removed = if cfg.remove_per_iter == 0 {
            Vec::new()
        } else {
            let deltas = match cfg.method {
                PurifyMethod::LooRetrain => loo_deltas(&current, variance, &fit, &loop_cfg)?,
                PurifyMethod::InfluenceApprox => influence_delta_estimate(&current, &fit)?,
            };
            select_removals(&current, &deltas, cfg.remove_per_iter)
        };
        if !removed.is_empty() {
            current = current.remove_ids(&removed)?;
            fit = fit_set(&current, &tcfg, cfg.warm_start.then_some(&fit))?;
            variance = variance_of(&current, &fit)?;
        }
        push(&mut records, iteration, removed, variance, &current, &fit)?;
    }
    Ok(PurificationTrace { records })
}

/// Runs the purification loop and returns the full trace.
pub fn purify(
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &PurifyConfig,
) -> Result<PurificationTrace> {
    purify_observed(train_set, test_set, cfg, |_| {})
}
