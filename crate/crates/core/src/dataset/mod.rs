//! Labeled unit-norm feature datasets, templates and pair protocols.
//!
//! Rows are stored in a single row-major `Vec<f64>`. Every row is unit length
//! (within [`UNIT_TOLERANCE`]) once it is inside a [`LabeledDataset`].

mod io;

use std::collections::{BTreeMap, BTreeSet};

pub use io::{
    load_dataset, load_features, load_labels, load_matrix, load_protocol, load_templates,
    save_dataset, save_features, save_labels, save_matrix, save_protocol, save_templates,
    FeatureFormat, FeatureMatrix, FEATURE_MAGIC, MATRIX_MAGIC,
};

use crate::error::{Error, Result};
use crate::linalg;

/// Maximum allowed deviation of a row norm from 1.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

/// A unit-length dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Scales `v` to unit Euclidean length.
pub fn normalize_unit(v: &[f64]) -> Result<FeatureVector> {
    if let Some(index) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let norm = linalg::norm(v);
    if norm < ZERO_NORM {
        return Err(Error::ZeroVector { norm });
    }
    Ok(FeatureVector(v.iter().map(|x| x / norm).collect()))
}

/// Like [`normalize_unit`] but leaves rows that are already unit length
/// (within [`UNIT_TOLERANCE`]) untouched, so single-precision data read back
/// from disk keeps its exact bits.
pub(crate) fn ensure_unit(v: &[f64]) -> Result<Vec<f64>> {
    if let Some(index) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    if (linalg::norm(v) - 1.0).abs() <= UNIT_TOLERANCE {
        Ok(v.to_vec())
    } else {
        normalize_unit(v).map(FeatureVector::into_inner)
    }
}

/// `N` unit-norm feature rows with one integer class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<u64>,
}

impl LabeledDataset {
    /// Builds a dataset from rows that must already be unit length.
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<u64>) -> Result<Self> {
        let ds = Self::unchecked(dim, features, labels)?;
        for (i, row) in ds.rows().enumerate() {
            if let Some(index) = row.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    index: i * dim + index,
                });
            }
            let norm = linalg::norm(row);
            if (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::NotUnitNorm { row: i, norm });
            }
        }
        Ok(ds)
    }

    /// Builds a dataset from raw rows, normalizing each to unit length.
    pub fn from_raw(dim: usize, raw: Vec<f64>, labels: Vec<u64>) -> Result<Self> {
        let mut ds = Self::unchecked(dim, raw, labels)?;
        for i in 0..ds.len() {
            let unit = ensure_unit(ds.row(i))?;
            ds.features[i * dim..(i + 1) * dim].copy_from_slice(&unit);
        }
        Ok(ds)
    }

    fn unchecked(dim: usize, features: Vec<f64>, labels: Vec<u64>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::dim(2, dim, "feature dimension must be at least 2"));
        }
        if !features.len().is_multiple_of(dim) {
            return Err(Error::dim(
                dim,
                features.len() % dim,
                "feature buffer is not a whole number of rows",
            ));
        }
        let n = features.len() / dim;
        if labels.len() != n {
            return Err(Error::dim(n, labels.len(), "one label per row"));
        }
        Ok(Self {
            dim,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.features.chunks_exact(self.dim)
    }

    pub fn label(&self, i: usize) -> u64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    /// Row-major `N × dim` feature buffer.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn distinct_labels(&self) -> BTreeSet<u64> {
        self.labels.iter().copied().collect()
    }

    /// Row indices grouped by label, in ascending label and row order.
    pub fn indices_by_label(&self) -> BTreeMap<u64, Vec<usize>> {
        let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            groups.entry(l).or_default().push(i);
        }
        groups
    }

    /// New dataset holding the given rows in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::dim(self.len(), i, "subset index out of range"));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Ok(Self {
            dim: self.dim,
            features,
            labels,
        })
    }

    /// Rounds every entry to single precision, as persisted by the binary
    /// and CSV formats. Loading the saved file gives back exactly this value.
    pub fn quantized(&self) -> Self {
        Self {
            dim: self.dim,
            features: self.features.iter().map(|&x| x as f32 as f64).collect(),
            labels: self.labels.clone(),
        }
    }
}

/// A set of dataset rows compared as one unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub template_id: u64,
    pub members: Vec<usize>,
}

impl Template {
    pub fn new(template_id: u64, members: Vec<usize>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidTemplate {
                template_id,
                reason: "template has no members".into(),
            });
        }
        Ok(Self {
            template_id,
            members,
        })
    }

    pub fn single(template_id: u64, row: usize) -> Self {
        Self {
            template_id,
            members: vec![row],
        }
    }

    /// Subject label shared by all members.
    pub fn subject(&self, ds: &LabeledDataset) -> Result<u64> {
        self.check_members(ds)?;
        let first = ds.label(self.members[0]);
        if self.members.iter().any(|&m| ds.label(m) != first) {
            return Err(Error::InvalidTemplate {
                template_id: self.template_id,
                reason: "members carry different labels".into(),
            });
        }
        Ok(first)
    }

    fn check_members(&self, ds: &LabeledDataset) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::InvalidTemplate {
                template_id: self.template_id,
                reason: "template has no members".into(),
            });
        }
        if let Some(&bad) = self.members.iter().find(|&&m| m >= ds.len()) {
            return Err(Error::InvalidTemplate {
                template_id: self.template_id,
                reason: format!("member index {bad} out of range for {} rows", ds.len()),
            });
        }
        Ok(())
    }
}

/// Collapses a template into one unit vector: the mean of its members,
/// re-normalized to unit length. A single-member template is its row.
///
/// Members are summed in ascending row order, so the result does not depend
/// on how `members` is ordered.
pub fn flatten_template(t: &Template, ds: &LabeledDataset) -> Result<FeatureVector> {
    t.check_members(ds)?;
    if t.members.len() == 1 {
        return Ok(FeatureVector(ds.row(t.members[0]).to_vec()));
    }
    let mut order = t.members.clone();
    order.sort_unstable();
    let mut sum = vec![0.0; ds.dim()];
    for &m in &order {
        linalg::axpy(1.0, ds.row(m), &mut sum);
    }
    let count = order.len() as f64;
    sum.iter_mut().for_each(|x| *x /= count);
    normalize_unit(&sum)
}

/// Templates keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<u64, Template>,
}

impl TemplateSet {
    pub fn new(templates: impl IntoIterator<Item = Template>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for t in templates {
            let id = t.template_id;
            if t.members.is_empty() {
                return Err(Error::InvalidTemplate {
                    template_id: id,
                    reason: "template has no members".into(),
                });
            }
            if map.insert(id, t).is_some() {
                return Err(Error::InvalidTemplate {
                    template_id: id,
                    reason: "duplicate template id".into(),
                });
            }
        }
        Ok(Self { templates: map })
    }

    /// One template per dataset row, with template id equal to the row index.
    pub fn singletons(ds: &LabeledDataset) -> Self {
        Self {
            templates: (0..ds.len())
                .map(|i| (i as u64, Template::single(i as u64, i)))
                .collect(),
        }
    }

    pub fn get(&self, id: u64) -> Result<&Template> {
        self.templates.get(&id).ok_or(Error::UnknownTemplate(id))
    }

    /// Templates in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &Template> {
        self.templates.values()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub a: u64,
    pub b: u64,
    pub genuine: bool,
}

/// Template pairs to compare, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairProtocol {
    pub pairs: Vec<Pair>,
}

impl PairProtocol {
    pub fn new(pairs: Vec<Pair>) -> Self {
        Self { pairs }
    }

    /// Checks that every id resolves and both pair kinds are present.
    pub fn validate(&self, templates: &TemplateSet) -> Result<()> {
        for p in &self.pairs {
            templates.get(p.a)?;
            templates.get(p.b)?;
        }
        if !self.pairs.iter().any(|p| p.genuine) {
            return Err(Error::InvalidProtocol("no genuine pairs".into()));
        }
        if !self.pairs.iter().any(|p| !p.genuine) {
            return Err(Error::InvalidProtocol("no impostor pairs".into()));
        }
        Ok(())
    }

    /// Every unordered pair of distinct templates, genuine when their subjects match.
    pub fn all_pairs(templates: &TemplateSet, ds: &LabeledDataset) -> Result<Self> {
        let ts: Vec<(u64, u64)> = templates
            .iter()
            .map(|t| Ok((t.template_id, t.subject(ds)?)))
            .collect::<Result<_>>()?;
        let mut pairs = Vec::with_capacity(ts.len() * ts.len().saturating_sub(1) / 2);
        for (i, &(a, sa)) in ts.iter().enumerate() {
            for &(b, sb) in &ts[i + 1..] {
                pairs.push(Pair {
                    a,
                    b,
                    genuine: sa == sb,
                });
            }
        }
        Ok(Self { pairs })
    }
}
