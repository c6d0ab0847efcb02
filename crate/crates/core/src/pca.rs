//! The embedding matrix and its principal-component initialization.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::linalg;

/// Entries below this magnitude are skipped when fixing eigenvector signs.
const SIGN_EPS: f64 = 1e-12;

/// A linear map `R^d_in -> R^d_out`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    d_out: usize,
    d_in: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn from_rows(d_out: usize, d_in: usize, data: Vec<f64>) -> Result<Self> {
        if d_out == 0 || d_in == 0 {
            return Err(Error::InvalidConfig(format!(
                "embedding matrix must be non-empty, got {d_out}x{d_in}"
            )));
        }
        if data.len() != d_out * d_in {
            return Err(Error::dim(d_out * d_in, data.len(), "matrix entries"));
        }
        if let Some(index) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { d_out, d_in, data })
    }

    /// Square identity; the "raw features" embedding.
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self {
            d_out: dim,
            d_in: dim,
            data,
        }
    }

    pub fn zeros(d_out: usize, d_in: usize) -> Self {
        Self {
            d_out,
            d_in,
            data: vec![0.0; d_out * d_in],
        }
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d_in..(i + 1) * self.d_in]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d_in + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            d_out: self.d_out,
            d_in: self.d_in,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }

    /// Entries rounded to single precision, as written by `save_matrix`.
    pub fn quantized(&self) -> Self {
        Self {
            d_out: self.d_out,
            d_in: self.d_in,
            data: self.data.iter().map(|&x| x as f32 as f64).collect(),
        }
    }

    /// `W x` without checking the length of `x`.
    pub(crate) fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.d_in);
        self.data
            .chunks_exact(self.d_in)
            .map(|r| linalg::dot(r, x))
            .collect()
    }

    /// `W Wᵀ`, row-major `d_out × d_out`.
    pub fn gram(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.d_out * self.d_out];
        for i in 0..self.d_out {
            for j in 0..self.d_out {
                g[i * self.d_out + j] = linalg::dot(self.row(i), self.row(j));
            }
        }
        g
    }
}

/// Projects `x` through `W`. No centering and no re-normalization.
pub fn project(w: &EmbeddingMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != w.d_in {
        return Err(Error::dim(w.d_in, x.len(), "input vector length"));
    }
    Ok(w.apply(x))
}

/// Result of a principal component analysis.
#[derive(Debug, Clone)]
pub struct Pca {
    /// Top `d_out` unit eigenvectors of the covariance, one per row, by
    /// descending eigenvalue.
    pub components: EmbeddingMatrix,
    /// Matching eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Sample covariance (divisor `N - 1`) of the mean-centered rows.
pub fn covariance(ds: &LabeledDataset, exec: Execution) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (ds.len(), ds.dim());
    let mut mean = vec![0.0; d];
    for row in ds.rows() {
        linalg::axpy(1.0, row, &mut mean);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    // centered columns, so each covariance entry is one contiguous dot
    let mut cols = vec![0.0; d * n];
    for (k, row) in ds.rows().enumerate() {
        for j in 0..d {
            cols[j * n + k] = row[j] - mean[j];
        }
    }
    let denom = (n.max(2) - 1) as f64;
    let mut cov = vec![0.0; d * d];
    exec::for_each_row_mut(&mut cov, d, exec, |i, out| {
        let ci = &cols[i * n..(i + 1) * n];
        for (j, o) in out.iter_mut().enumerate() {
            *o = linalg::dot(ci, &cols[j * n..(j + 1) * n]) / denom;
        }
    });
    (mean, cov)
}

/// Full eigendecomposition of the covariance, truncated to `d_out` components.
pub fn pca(ds: &LabeledDataset, d_out: usize, exec: Execution) -> Result<Pca> {
    let (n, d_in) = (ds.len(), ds.dim());
    if d_out == 0 {
        return Err(Error::InvalidConfig("d_out must be at least 1".into()));
    }
    if d_out >= d_in {
        return Err(Error::dim(
            d_in - 1,
            d_out,
            "d_out must be smaller than the feature dimension",
        ));
    }
    if n <= d_out {
        return Err(Error::InsufficientData { n, d_out });
    }
    let (mean, cov) = covariance(ds, exec);
    let eig = SymmetricEigen::try_new(DMatrix::from_row_slice(d_in, d_in, &cov), f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..d_in).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .total_cmp(&eig.eigenvalues[i])
            .then(i.cmp(&j))
    });

    let mut data = Vec::with_capacity(d_out * d_in);
    let mut eigenvalues = Vec::with_capacity(d_out);
    for &k in order.iter().take(d_out) {
        let v = eig.eigenvectors.column(k);
        let flip = v
            .iter()
            .find(|x| x.abs() > SIGN_EPS)
            .is_some_and(|&x| x < 0.0);
        let s = if flip { -1.0 } else { 1.0 };
        data.extend(v.iter().map(|x| s * x));
        eigenvalues.push(eig.eigenvalues[k]);
    }
    Ok(Pca {
        components: EmbeddingMatrix::from_rows(d_out, d_in, data)?,
        eigenvalues,
        mean,
    })
}

/// Initial embedding: the first `d_out` principal components as rows.
pub fn pca_init(ds: &LabeledDataset, d_out: usize) -> Result<EmbeddingMatrix> {
    pca(ds, d_out, Execution::default()).map(|p| p.components)
}
