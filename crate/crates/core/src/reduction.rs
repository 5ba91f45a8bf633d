//! Linear dimensionality reduction fitted on the training embeddings.
//!
//! Principal axes come from an eigendecomposition of the sample covariance.
//! Axis signs are pinned (largest-magnitude entry positive) and eigenvalue
//! ties break by original index, so refitting the same data reproduces the
//! same model bit for bit.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::{EmbeddingError, EmbeddingMatrix};
use crate::matrix::DenseMatrix;

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("target dimension {0} is too small, need at least 2")]
    TargetTooSmall(usize),
    #[error("target dimension {target} must be below the {rows} training rows")]
    TargetNotBelowRows { target: usize, rows: usize },
    #[error("target dimension {target} must be below the input dimension {dims}")]
    TargetNotBelowDims { target: usize, dims: usize },
    #[error("reducer expects dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed reducer file {path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Fitted projection: subtract `mean_vector`, multiply by `components`.
/// `components` holds one orthonormal row per kept axis, strongest first.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReducerModel {
    pub mean_vector: Vec<f64>,
    pub components: DenseMatrix,
    pub target_dim: usize,
    pub explained_variance: Vec<f64>,
}

impl ReducerModel {
    pub fn input_dim(&self) -> usize {
        self.components.n_cols()
    }

    pub fn save(&self, path: &Path) -> Result<(), ReductionError> {
        let text = serde_json::to_string_pretty(self).expect("reducer serializes");
        fs::write(path, text)
            .map_err(|source| ReductionError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ReductionError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ReductionError::Io { path: path.display().to_string(), source })?;
        serde_json::from_str(&text).map_err(|e| ReductionError::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Fits the reducer on `embeddings`. The target dimension must leave room on
/// both sides: at least 2, strictly below the row count, strictly below the
/// input dimension.
pub fn fit_reducer(
    embeddings: &EmbeddingMatrix,
    target_dim: usize,
) -> Result<ReducerModel, ReductionError> {
    let n = embeddings.len();
    let d = embeddings.dimension();
    if target_dim < 2 {
        return Err(ReductionError::TargetTooSmall(target_dim));
    }
    if target_dim >= n {
        return Err(ReductionError::TargetNotBelowRows { target: target_dim, rows: n });
    }
    if target_dim >= d {
        return Err(ReductionError::TargetNotBelowDims { target: target_dim, dims: d });
    }

    let mut mean_vector = vec![0.0; d];
    for row in embeddings.matrix().rows() {
        for (m, v) in mean_vector.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean_vector.iter_mut().for_each(|m| *m /= n as f64);

    let mut centered = DMatrix::<f64>::zeros(n, d);
    for (i, row) in embeddings.matrix().rows().enumerate() {
        for (j, v) in row.iter().enumerate() {
            centered[(i, j)] = v - mean_vector[j];
        }
    }
    let covariance = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eigen = SymmetricEigen::new(covariance);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]).then(a.cmp(&b))
    });

    let mut components = DenseMatrix::zeros(target_dim, d);
    let mut explained_variance = Vec::with_capacity(target_dim);
    for (k, &src) in order.iter().take(target_dim).enumerate() {
        explained_variance.push(eigen.eigenvalues[src].max(0.0));
        let column = eigen.eigenvectors.column(src);
        let axis = components.row_mut(k);
        for (j, value) in column.iter().enumerate() {
            axis[j] = *value;
        }
        let mut pivot = 0usize;
        for (j, value) in axis.iter().enumerate() {
            if value.abs() > axis[pivot].abs() {
                pivot = j;
            }
        }
        if axis[pivot] < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
    }

    Ok(ReducerModel { mean_vector, components, target_dim, explained_variance })
}

/// Projects every row of `embeddings` through the reducer. Ids and provider
/// tag carry over unchanged.
pub fn transform(
    reducer: &ReducerModel,
    embeddings: &EmbeddingMatrix,
) -> Result<EmbeddingMatrix, ReductionError> {
    if embeddings.dimension() != reducer.input_dim() {
        return Err(ReductionError::DimensionMismatch {
            expected: reducer.input_dim(),
            got: embeddings.dimension(),
        });
    }
    let mut out = DenseMatrix::zeros(embeddings.len(), reducer.target_dim);
    for (i, row) in embeddings.matrix().rows().enumerate() {
        let projected = out.row_mut(i);
        for (k, axis) in reducer.components.rows().enumerate() {
            let mut sum = 0.0;
            for ((x, m), c) in row.iter().zip(&reducer.mean_vector).zip(axis) {
                sum += (x - m) * c;
            }
            projected[k] = sum;
        }
    }
    Ok(EmbeddingMatrix::new(
        embeddings.doc_ids().to_vec(),
        out,
        embeddings.provider_tag().to_string(),
    )?)
}

/// Projects a single vector without wrapping it in a matrix.
pub fn transform_vector(reducer: &ReducerModel, vector: &[f64]) -> Result<Vec<f64>, ReductionError> {
    if vector.len() != reducer.input_dim() {
        return Err(ReductionError::DimensionMismatch {
            expected: reducer.input_dim(),
            got: vector.len(),
        });
    }
    let mut out = Vec::with_capacity(reducer.target_dim);
    for axis in reducer.components.rows() {
        let mut sum = 0.0;
        for ((x, m), c) in vector.iter().zip(&reducer.mean_vector).zip(axis) {
            sum += (x - m) * c;
        }
        out.push(sum);
    }
    Ok(out)
}
