//! Plain autoencoder detector and the per-dimension baselines it is compared against.
//!
//! Records enter raw; the detector owns the min/max [`Normalizer`] fitted on
//! the training set and applies it exactly once before scoring. The anomaly
//! threshold defaults to `mu + 3 sigma` of the training-set MSE.

mod normalizer;
mod pca;

pub use normalizer::Normalizer;
pub use pca::PcaBaseline;

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::neuralnet::{mean_squared_difference, sgd_train, Activation, DenseNetwork, TrainConfig, TrainReport};
use crate::{Error, Result};

/// Magnitude used in place of an infinite z-score when a training dimension had zero spread.
pub const OUTLIER_SENTINEL: f64 = 1e9;

/// Hidden widths and one activation per layer (hidden layers then output).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeArchitecture {
    pub hidden: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl AeArchitecture {
    /// Three-layer AE: `N -> hidden -> N`.
    pub fn shallow(hidden: usize, hidden_activation: Activation, output_activation: Activation) -> Self {
        Self {
            hidden: vec![hidden],
            activations: vec![hidden_activation, output_activation],
        }
    }

    /// Five-layer AE with ReLU on the second and fourth layers and no activation elsewhere.
    pub fn five_layer(outer: usize, bottleneck: usize) -> Self {
        Self {
            hidden: vec![outer, bottleneck, outer],
            activations: vec![
                Activation::Relu,
                Activation::Identity,
                Activation::Relu,
                Activation::Identity,
            ],
        }
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        if self.hidden.is_empty() {
            return Err(Error::Structural("at least one hidden layer is required".into()));
        }
        if self.activations.len() != self.hidden.len() + 1 {
            return Err(Error::Structural(format!(
                "{} hidden layers need {} activations, got {}",
                self.hidden.len(),
                self.hidden.len() + 1,
                self.activations.len()
            )));
        }
        let bottleneck = *self.hidden.iter().min().expect("non-empty");
        if bottleneck >= input_dim {
            return Err(Error::Structural(format!(
                "bottleneck width {bottleneck} must be smaller than input dimension {input_dim}"
            )));
        }
        Ok(())
    }

    pub fn build(&self, input_dim: usize, seed: u64) -> Result<DenseNetwork> {
        self.validate(input_dim)?;
        let mut widths = self.hidden.clone();
        widths.push(input_dim);
        DenseNetwork::glorot(input_dim, &widths, &self.activations, seed)
    }
}

/// Statistics of the training set kept for thresholds and baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    /// Per-dimension mean of the raw training values.
    pub mean: Array1<f64>,
    /// Per-dimension population standard deviation of the raw training values.
    pub std: Array1<f64>,
    pub mse_mean: f64,
    pub mse_std: f64,
}

/// Score and decision for one record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub score: f64,
    pub anomalous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeDetector {
    pub net: DenseNetwork,
    pub normalizer: Normalizer,
    pub threshold: f64,
    pub train_stats: TrainStats,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub feature_names: Vec<String>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl AeDetector {
    /// Assembles a detector from parts; training statistics are computed from `train`.
    pub fn from_parts(net: DenseNetwork, normalizer: Normalizer, train: ArrayView2<f64>) -> Result<Self> {
        if !net.is_autoencoder() {
            return Err(Error::Structural("detector network must map N dims to N dims".into()));
        }
        if net.input_dim() != normalizer.dim() {
            return Err(Error::DimensionMismatch {
                expected: net.input_dim(),
                got: normalizer.dim(),
            });
        }
        let mean = train.mean_axis(Axis(0)).ok_or_else(|| Error::EmptyData("no training rows".into()))?;
        let std = train.std_axis(Axis(0), 0.0);
        let mut det = Self {
            net,
            normalizer,
            threshold: 0.0,
            train_stats: TrainStats {
                mean,
                std,
                mse_mean: 0.0,
                mse_std: 0.0,
            },
            feature_names: Vec::new(),
        };
        let scores = det.score_rows(train)?;
        let (mse_mean, mse_std) = mean_std(&scores);
        det.train_stats.mse_mean = mse_mean;
        det.train_stats.mse_std = mse_std;
        det.threshold = mse_mean + 3.0 * mse_std;
        Ok(det)
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Self {
        self.feature_names = names;
        self
    }

    /// Reconstruction MSE of an already-normalized record.
    pub fn mse_normalized(&self, z: ArrayView1<f64>) -> Result<f64> {
        self.net.reconstruction_mse(z)
    }

    pub fn mse_score(&self, x: ArrayView1<f64>) -> Result<f64> {
        let z = self.normalizer.normalize(x)?;
        self.mse_normalized(z.view())
    }

    pub fn score_rows(&self, data: ArrayView2<f64>) -> Result<Vec<f64>> {
        data.rows().into_iter().map(|row| self.mse_score(row)).collect()
    }

    /// Strict comparison: a score equal to the threshold is normal.
    pub fn is_anomalous(&self, x: ArrayView1<f64>) -> Result<Decision> {
        let score = self.mse_score(x)?;
        Ok(Decision {
            score,
            anomalous: score > self.threshold,
        })
    }

    /// Signed per-dimension `x^(L)_i - x_i` in normalized units.
    pub fn reconstruction_error_vector(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        let z = self.normalizer.normalize(x)?;
        let out = self.net.output(z.view())?;
        Ok(out - &z)
    }

    /// Per-dimension z-score of the raw record against training mean and std.
    pub fn outlier_degree(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(ndarray::Zip::from(&x)
            .and(&self.train_stats.mean)
            .and(&self.train_stats.std)
            .map_collect(|&v, &mu, &sd| {
                let diff = v - mu;
                if sd > 0.0 {
                    diff / sd
                } else if diff == 0.0 {
                    0.0
                } else {
                    OUTLIER_SENTINEL.copysign(diff)
                }
            }))
    }
}

/// Fits the normalizer, trains the network on normalized data and calibrates the threshold.
pub fn train_detector(
    train: ArrayView2<f64>,
    arch: &AeArchitecture,
    cfg: &TrainConfig,
) -> Result<(AeDetector, TrainReport)> {
    if train.nrows() == 0 {
        return Err(Error::EmptyData("training set is empty".into()));
    }
    arch.validate(train.ncols())?;
    let normalizer = Normalizer::fit(train)?;
    let normalized = normalizer.normalize_rows(train)?;
    let mut net = arch.build(train.ncols(), cfg.seed)?;
    let report = sgd_train(&mut net, normalized.view(), cfg)?;
    let det = AeDetector::from_parts(net, normalizer, train)?;
    Ok((det, report))
}

/// Mean squared difference helper re-exported for baselines working in normalized space.
pub fn mse_between(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    mean_squared_difference(a, b)
}
