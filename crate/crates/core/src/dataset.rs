//! Labeled samples with stable point identities.
//!
//! Every point carries an id that survives removals, so purification traces
//! and subset enumerations can name points unambiguously.

use crate::error::{Error, Result};

/// Stable identity of a data point. Ids are assigned at construction and
/// preserved across removals and splits.
pub type PointId = u64;

/// A single labeled sample: a feature vector plus a class index.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub features: Vec<f64>,
    pub label: usize,
}

impl DataPoint {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        DataPoint { features, label }
    }
}

/// An ordered collection of [`DataPoint`]s sharing a feature dimension and a
/// class count.
#[derive(Debug, Clone)]
pub struct Dataset {
    points: Vec<DataPoint>,
    ids: Vec<PointId>,
    /// Ground-truth generating component per point, when known.
    components: Option<Vec<usize>>,
    dim: usize,
    n_classes: usize,
}

impl Dataset {
    /// Builds a dataset with fresh ids `0..n`.
    pub fn new(points: Vec<DataPoint>, n_classes: usize) -> Result<Self> {
        let ids = (0..points.len() as PointId).collect();
        Self::with_ids(points, ids, n_classes, None)
    }

    /// Builds a dataset with caller-provided ids (must be unique).
    pub fn with_ids(
        points: Vec<DataPoint>,
        ids: Vec<PointId>,
        n_classes: usize,
        components: Option<Vec<usize>>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if ids.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: ids.len(),
            });
        }
        if let Some(comp) = &components {
            if comp.len() != points.len() {
                return Err(Error::DimensionMismatch {
                    expected: points.len(),
                    got: comp.len(),
                });
            }
        }
        let dim = points[0].features.len();
        for p in &points {
            if p.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.features.len(),
                });
            }
            if !p.features.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid("features", "non-finite feature value"));
            }
            if p.label >= n_classes {
                return Err(Error::invalid(
                    "label",
                    format!("label {} out of range for {} classes", p.label, n_classes),
                ));
            }
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != ids.len() {
            return Err(Error::invalid("ids", "duplicate point ids"));
        }
        Ok(Dataset {
            points,
            ids,
            components,
            dim,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn point(&self, index: usize) -> &DataPoint {
        &self.points[index]
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn ids(&self) -> &[PointId] {
        &self.ids
    }

    pub fn id(&self, index: usize) -> PointId {
        self.ids[index]
    }

    pub fn components(&self) -> Option<&[usize]> {
        self.components.as_deref()
    }

    pub fn index_of(&self, id: PointId) -> Result<usize> {
        self.ids
            .iter()
            .position(|&i| i == id)
            .ok_or(Error::UnknownPointId(id))
    }

    /// Number of points carrying each label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for p in &self.points {
            counts[p.label] += 1;
        }
        counts
    }

    /// New dataset keeping only the points at the given indices, in the given
    /// order. Ids are preserved.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let points = indices.iter().map(|&i| self.points[i].clone()).collect();
        let ids = indices.iter().map(|&i| self.ids[i]).collect();
        let components = self
            .components
            .as_ref()
            .map(|c| indices.iter().map(|&i| c[i]).collect());
        Dataset::with_ids(points, ids, self.n_classes, components)
    }

    /// New dataset with the listed ids removed.
    pub fn remove_ids(&self, remove: &[PointId]) -> Result<Dataset> {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| !remove.contains(&self.ids[i]))
            .collect();
        if keep.len() == self.len() - remove.len() {
            self.select(&keep)
        } else {
            let missing = remove
                .iter()
                .find(|id| !self.ids.contains(id))
                .copied()
                .unwrap_or(0);
            Err(Error::UnknownPointId(missing))
        }
    }

    /// Replaces the label of the point at `index`, returning a new dataset.
    pub(crate) fn with_label(&self, index: usize, label: usize) -> Dataset {
        let mut out = self.clone();
        out.points[index].label = label;
        out
    }
}
