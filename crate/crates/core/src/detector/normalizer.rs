use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-dimension min/max affine map fitted on training data.
///
/// Values outside the training range are not clamped. A dimension that was
/// constant in training always normalizes to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Array1<f64>,
    pub max: Array1<f64>,
}

impl Normalizer {
    pub fn fit(train: ArrayView2<f64>) -> Result<Self> {
        if train.nrows() == 0 {
            return Err(Error::EmptyData("cannot fit a normalizer on zero records".into()));
        }
        let min = train.fold_axis(Axis(0), f64::INFINITY, |&a, &b| a.min(b));
        let max = train.fold_axis(Axis(0), f64::NEG_INFINITY, |&a, &b| a.max(b));
        if min.iter().chain(max.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("training data contains non-finite values".into()));
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    #[inline]
    fn scale(lo: f64, hi: f64, v: f64) -> f64 {
        let range = hi - lo;
        if range > 0.0 {
            (v - lo) / range
        } else {
            0.0
        }
    }

    pub fn normalize(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check(x.len())?;
        Ok(ndarray::Zip::from(&x)
            .and(&self.min)
            .and(&self.max)
            .map_collect(|&v, &lo, &hi| Self::scale(lo, hi, v)))
    }

    pub fn normalize_rows(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(data.ncols())?;
        let mut out = data.to_owned();
        for mut row in out.rows_mut() {
            ndarray::Zip::from(&mut row)
                .and(&self.min)
                .and(&self.max)
                .for_each(|v, &lo, &hi| *v = Self::scale(lo, hi, *v));
        }
        Ok(out)
    }

    /// Inverse map. Constant dimensions come back as their training value.
    pub fn denormalize(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check(v.len())?;
        Ok(ndarray::Zip::from(&v)
            .and(&self.min)
            .and(&self.max)
            .map_collect(|&u, &lo, &hi| lo + u * (hi - lo)))
    }

    /// Scales a displacement in normalized units back to raw units (no offset).
    pub fn denormalize_displacement(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check(v.len())?;
        Ok(ndarray::Zip::from(&v)
            .and(&self.min)
            .and(&self.max)
            .map_collect(|&u, &lo, &hi| u * (hi - lo)))
    }
}
