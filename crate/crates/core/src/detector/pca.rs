use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::Normalizer;
use crate::{Error, Result};

/// Linear baseline: reconstruction error against the top-`m` principal subspace.
///
/// Operates on min/max-normalized, mean-centered data, the same preprocessing
/// the autoencoder sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBaseline {
    pub normalizer: Normalizer,
    pub mean: Array1<f64>,
    /// `[m, N]`, orthonormal rows sorted by decreasing explained variance.
    pub components: Array2<f64>,
    pub explained_variance: Array1<f64>,
}

impl PcaBaseline {
    pub fn fit(train: ArrayView2<f64>, m: usize) -> Result<Self> {
        let normalizer = Normalizer::fit(train)?;
        let dims = train.ncols();
        if m > dims {
            return Err(Error::InvalidInput(format!(
                "cannot keep {m} principal components of {dims}-dimensional data"
            )));
        }
        let mut centered = normalizer.normalize_rows(train)?;
        let mean = centered.mean_axis(Axis(0)).expect("non-empty");
        centered -= &mean;
        let cov = centered.t().dot(&centered) / train.nrows() as f64;

        let eig = SymmetricEigen::new(DMatrix::from_fn(dims, dims, |i, j| cov[[i, j]]));
        let mut order: Vec<usize> = (0..dims).collect();
        // descending eigenvalue, index as tie-break
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let components = Array2::from_shape_fn((m, dims), |(r, c)| eig.eigenvectors[(c, order[r])]);
        let explained_variance = order[..m].iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
        Ok(Self {
            normalizer,
            mean,
            components,
            explained_variance,
        })
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    /// Centered normalized record minus its projection onto the component span.
    pub fn residual(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        let centered = self.normalizer.normalize(x)? - &self.mean;
        let coords = self.components.dot(&centered);
        Ok(&centered - &self.components.t().dot(&coords))
    }

    /// `(1/N) ||residual||^2`, scaled like the autoencoder MSE.
    pub fn score(&self, x: ArrayView1<f64>) -> Result<f64> {
        let r = self.residual(x)?;
        Ok(r.dot(&r) / r.len() as f64)
    }

    pub fn score_rows(&self, data: ArrayView2<f64>) -> Result<Vec<f64>> {
        data.rows().into_iter().map(|row| self.score(row)).collect()
    }
}
