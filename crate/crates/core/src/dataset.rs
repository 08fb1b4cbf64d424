//! Activation matrices, label vectors and stratified subsampling.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::npy::{self, ArrayData, NpyArray};
use crate::rng::{substream, Substream};

/// Default neighbor count.
pub const DEFAULT_K: usize = 30;
/// Default merge confidence.
pub const DEFAULT_Z: f64 = 1.0;
/// Default Gaussian CKA bandwidth, as a fraction of the mean first-neighbor distance.
pub const DEFAULT_CKA_BANDWIDTH_FRACTION: f64 = 0.2;

/// One layer's representation: `n_points` rows of `n_features` activations.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMatrix {
    layer_id: String,
    n_points: usize,
    n_features: usize,
    values: Vec<f64>,
}

impl ActivationMatrix {
    /// Validates shape and finiteness. Rejects non-finite entries with the
    /// flat index of the first offender.
    pub fn new(
        layer_id: impl Into<String>,
        n_points: usize,
        n_features: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::InvalidParameter(format!(
                "activation matrix needs at least 2 points, got {n_points}"
            )));
        }
        if n_features < 1 {
            return Err(Error::InvalidParameter(
                "activation matrix needs at least 1 feature".into(),
            ));
        }
        if values.len() != n_points * n_features {
            return Err(Error::LengthMismatch {
                expected: n_points * n_features,
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(ActivationMatrix {
            layer_id: layer_id.into(),
            n_points,
            n_features,
            values,
        })
    }

    pub fn from_rows(layer_id: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_features) {
            return Err(Error::LengthMismatch {
                expected: n_features,
                found: bad.len(),
            });
        }
        Self::new(layer_id, rows.len(), n_features, rows.concat())
    }

    pub fn layer_id(&self) -> &str {
        &self.layer_id
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn with_layer_id(mut self, layer_id: impl Into<String>) -> Self {
        self.layer_id = layer_id.into();
        self
    }

    /// Returns the matrix with every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.layer_id.clone(),
            self.n_points,
            self.n_features,
            self.values.iter().map(|v| v * factor).collect(),
        )
    }

    /// Rows `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self::new(self.layer_id.clone(), indices.len(), self.n_features, values)
    }

    pub fn to_npy(&self) -> NpyArray {
        NpyArray {
            shape: vec![self.n_points, self.n_features],
            data: ArrayData::F64(self.values.clone()),
        }
    }

    /// Converts a decoded 2-D float array; integers are rejected.
    pub fn from_npy(layer_id: impl Into<String>, array: NpyArray) -> Result<Self> {
        let [n, d] = array.shape[..] else {
            return Err(Error::Unsupported(format!(
                "activations must be 2-D, got shape {:?}",
                array.shape
            )));
        };
        let values = match array.data {
            ArrayData::F64(v) => v,
            ArrayData::F32(v) => v.into_iter().map(f64::from).collect(),
            other => {
                return Err(Error::Unsupported(format!(
                    "activations must be floating point, got {:?}",
                    other.element_type()
                )))
            }
        };
        Self::new(layer_id, n, d, values)
    }
}

/// Loads a 2-D float container as an activation matrix tagged with the file stem.
pub fn load_activation_matrix(path: impl AsRef<Path>) -> Result<ActivationMatrix> {
    let path = path.as_ref();
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ActivationMatrix::from_npy(tag, npy::read_npy_file(path)?)
}

/// Class id per point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<usize>,
    n_classes: usize,
}

impl LabelSet {
    pub fn new(labels: Vec<usize>) -> Self {
        let n_classes = labels.iter().collect::<BTreeSet<_>>().len();
        LabelSet { labels, n_classes }
    }

    /// Accepts signed ids and rejects negatives.
    pub fn from_signed(ids: &[i64]) -> Result<Self> {
        let labels = ids
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                usize::try_from(v).map_err(|_| {
                    Error::InvalidLabels(format!("negative class id {v} at index {i}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(labels))
    }

    pub fn from_npy(array: NpyArray) -> Result<Self> {
        if array.shape.len() != 1 {
            return Err(Error::Unsupported(format!(
                "labels must be 1-D, got shape {:?}",
                array.shape
            )));
        }
        match array.data {
            ArrayData::I64(v) => Self::from_signed(&v),
            ArrayData::I32(v) => Self::from_signed(&v.into_iter().map(i64::from).collect::<Vec<_>>()),
            other => Err(Error::Unsupported(format!(
                "labels must be signed integers, got {:?}",
                other.element_type()
            ))),
        }
    }

    pub fn to_npy(&self) -> NpyArray {
        NpyArray {
            shape: vec![self.labels.len()],
            data: ArrayData::I64(self.labels.iter().map(|&l| l as i64).collect()),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Member indices per class id, ascending in both.
    pub fn members(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            out.entry(l).or_default().push(i);
        }
        out
    }

    /// Errors unless the label count matches `n_points`.
    pub fn check_len(&self, n_points: usize) -> Result<()> {
        if self.labels.len() != n_points {
            return Err(Error::LengthMismatch {
                expected: n_points,
                found: self.labels.len(),
            });
        }
        Ok(())
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self::new(indices.iter().map(|&i| self.labels[i]).collect())
    }
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelSet> {
    LabelSet::from_npy(npy::read_npy_file(path)?)
}

/// How many classes to keep and how many points per kept class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleSpec {
    pub n_classes_kept: usize,
    pub n_per_class: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisConfig {
    pub k: usize,
    pub z: f64,
    pub sample: Option<SampleSpec>,
    pub cka_bandwidth_fraction: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            k: DEFAULT_K,
            z: DEFAULT_Z,
            sample: None,
            cka_bandwidth_fraction: DEFAULT_CKA_BANDWIDTH_FRACTION,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self, n_points: usize) -> Result<()> {
        if self.k < 1 || self.k >= n_points {
            return Err(Error::InvalidParameter(format!(
                "k = {} must satisfy 1 <= k < N = {n_points}",
                self.k
            )));
        }
        if !(self.z >= 0.0) {
            return Err(Error::InvalidParameter(format!("Z = {} must be >= 0", self.z)));
        }
        if !(self.cka_bandwidth_fraction > 0.0) {
            return Err(Error::InvalidParameter(
                "CKA bandwidth fraction must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Picks the original indices kept by `spec`: classes are drawn by a seeded
/// shuffle of the sorted class ids, then members by a seeded shuffle within
/// each kept class. The result is sorted ascending.
pub fn stratified_indices(labels: &LabelSet, spec: &SampleSpec) -> Result<Vec<usize>> {
    let members = labels.members();
    if spec.n_classes_kept > members.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot keep {} classes out of {}",
            spec.n_classes_kept,
            members.len()
        )));
    }
    let mut rng = substream(spec.seed, Substream::Subsample);
    let mut classes: Vec<usize> = members.keys().copied().collect();
    classes.shuffle(&mut rng);
    classes.truncate(spec.n_classes_kept);
    classes.sort_unstable();

    let mut selected = Vec::with_capacity(spec.n_classes_kept * spec.n_per_class);
    for class in classes {
        let mut pool = members[&class].clone();
        if pool.len() < spec.n_per_class {
            return Err(Error::InvalidParameter(format!(
                "class {class} has {} members, {} requested",
                pool.len(),
                spec.n_per_class
            )));
        }
        pool.shuffle(&mut rng);
        selected.extend_from_slice(&pool[..spec.n_per_class]);
    }
    selected.sort_unstable();
    Ok(selected)
}

/// `size` distinct indices below `n_points` drawn uniformly, sorted ascending.
/// All indices are returned when `size >= n_points`.
pub fn random_subset(n_points: usize, size: usize, seed: u64) -> Vec<usize> {
    if size >= n_points {
        return (0..n_points).collect();
    }
    let mut rng = substream(seed, Substream::DiagnosticSubset);
    let mut picked = rand::seq::index::sample(&mut rng, n_points, size).into_vec();
    picked.sort_unstable();
    picked
}

/// Stratified subsample. Returns the reduced matrix, labels and the
/// original index of every kept row.
pub fn stratified_subsample(
    x: &ActivationMatrix,
    y: &LabelSet,
    spec: &SampleSpec,
) -> Result<(ActivationMatrix, LabelSet, Vec<usize>)> {
    y.check_len(x.n_points())?;
    let index_map = stratified_indices(y, spec)?;
    Ok((x.select_rows(&index_map)?, y.select(&index_map), index_map))
}
