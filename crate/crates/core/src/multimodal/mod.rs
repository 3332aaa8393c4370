//! Multimodal autoencoder (MAE) over several data types.
//!
//! Each type `k` has its own encoder (layer 2) and decoder (layer 5); a
//! shared third layer fuses all types and per-type fourth layers split the
//! fused code back out. Training runs in three stages: per-type shallow AEs
//! (outer pre-training), the fusion/de-fusion AE on frozen codes (inner
//! pre-training), then joint fine-tuning.
//!
//! Scores are a weighted MSE: each type's mean squared reconstruction error
//! is weighted by `w_k ∝ 1/nu_k`, where `nu_k` is that type's mean training
//! MSE, so types that are easy to reconstruct are not drowned out by noisy ones.

mod network;
mod train;

pub use network::{Branch, MaeArchitecture, MaeForward, MaeNetwork, ModalitySpec};
pub use train::{
    encode_all, finetune, inner_objective, joint_objective, per_type_training_mse, pretrain_inner, pretrain_outer,
    MaeTrainConfig, MaeTrainReport,
};

use ndarray::{s, Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::contribution::{estimate_with, ContributionConfig, ContributionResult, SmoothScore};
use crate::detector::{mean_std, Normalizer};
use crate::{Error, Result};

/// Smallest `nu_k` used when turning learnability into weights.
pub const NU_FLOOR: f64 = 1e-12;

/// `w_k = (1/nu_k) / sum_j (1/nu_j)` with each `nu` floored at [`NU_FLOOR`].
pub fn weights_from_nu(nu: &[f64]) -> Vec<f64> {
    let inv: Vec<f64> = nu.iter().map(|&v| 1.0 / v.max(NU_FLOOR)).collect();
    let total: f64 = inv.iter().sum();
    inv.iter().map(|v| v / total).collect()
}

/// `sum_k w_k mse_k`.
pub fn weighted_mse(per_type: &[f64], weights: &[f64]) -> f64 {
    let mut terms = per_type.iter().zip(weights).map(|(m, w)| w * m);
    let first = terms.next().unwrap_or(0.0);
    terms.fold(first, |acc, t| acc + t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WmseScore {
    pub wmse: f64,
    pub per_type: Vec<f64>,
}

/// Trained MAE detector: network, per-type normalizers, weights and threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeModel {
    pub net: MaeNetwork,
    pub normalizers: Vec<Normalizer>,
    /// Mean training MSE of each type.
    pub nu: Vec<f64>,
    pub weights: Vec<f64>,
    pub threshold: f64,
    pub wmse_mean: f64,
    pub wmse_std: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub feature_names: Vec<Vec<String>>,
}

impl MaeModel {
    /// Computes `nu`, weights and the `mu + 3 sigma` wMSE threshold on raw training data.
    pub fn from_parts(net: MaeNetwork, normalizers: Vec<Normalizer>, train: &[ArrayView2<f64>]) -> Result<Self> {
        if normalizers.len() != net.n_types() {
            return Err(Error::Structural(format!(
                "{} normalizers for {} data types",
                normalizers.len(),
                net.n_types()
            )));
        }
        for (b, n) in net.branches().iter().zip(&normalizers) {
            if n.dim() != b.input_dim() {
                return Err(Error::TypeDimensionMismatch {
                    data_type: b.name.clone(),
                    expected: b.input_dim(),
                    got: n.dim(),
                });
            }
        }
        let k = net.n_types();
        let mut model = Self {
            net,
            normalizers,
            nu: vec![0.0; k],
            weights: vec![1.0 / k as f64; k],
            threshold: 0.0,
            wmse_mean: 0.0,
            wmse_std: 0.0,
            feature_names: Vec::new(),
        };
        let per_type = model.per_type_rows(train)?;
        let rows = per_type.len();
        if rows == 0 {
            return Err(Error::EmptyData("no training rows".into()));
        }
        for j in 0..k {
            model.nu[j] = per_type.iter().map(|m| m[j]).sum::<f64>() / rows as f64;
        }
        model.weights = weights_from_nu(&model.nu);
        let scores: Vec<f64> = per_type.iter().map(|m| weighted_mse(m, &model.weights)).collect();
        let (mean, std) = mean_std(&scores);
        model.wmse_mean = mean;
        model.wmse_std = std;
        model.threshold = mean + 3.0 * std;
        Ok(model)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_feature_names(mut self, names: Vec<Vec<String>>) -> Self {
        self.feature_names = names;
        self
    }

    pub fn type_names(&self) -> Vec<&str> {
        self.net.branches().iter().map(|b| b.name.as_str()).collect()
    }

    pub fn normalize(&self, inputs: &[ArrayView1<f64>]) -> Result<Vec<Array1<f64>>> {
        self.net.check_inputs(inputs)?;
        inputs.iter().zip(&self.normalizers).map(|(x, n)| n.normalize(*x)).collect()
    }

    /// Weighted MSE of raw per-type inputs, with the per-type terms.
    pub fn wmse_score(&self, inputs: &[ArrayView1<f64>]) -> Result<WmseScore> {
        let z = self.normalize(inputs)?;
        let views: Vec<_> = z.iter().map(|v| v.view()).collect();
        let per_type = self.net.per_type_mse(&views)?;
        Ok(WmseScore {
            wmse: weighted_mse(&per_type, &self.weights),
            per_type,
        })
    }

    fn per_type_rows(&self, data: &[ArrayView2<f64>]) -> Result<Vec<Vec<f64>>> {
        if data.len() != self.net.n_types() {
            return Err(Error::InvalidInput(format!(
                "expected {} data types, got {}",
                self.net.n_types(),
                data.len()
            )));
        }
        let rows = data[0].nrows();
        if data.iter().any(|d| d.nrows() != rows) {
            return Err(Error::InvalidInput("data types have different record counts".into()));
        }
        (0..rows)
            .map(|r| {
                let inputs: Vec<_> = data.iter().map(|d| d.row(r)).collect();
                let z = self.normalize(&inputs)?;
                let views: Vec<_> = z.iter().map(|v| v.view()).collect();
                self.net.per_type_mse(&views)
            })
            .collect()
    }

    pub fn score_rows(&self, data: &[ArrayView2<f64>]) -> Result<Vec<WmseScore>> {
        Ok(self
            .per_type_rows(data)?
            .into_iter()
            .map(|per_type| WmseScore {
                wmse: weighted_mse(&per_type, &self.weights),
                per_type,
            })
            .collect())
    }

    pub fn is_anomalous(&self, inputs: &[ArrayView1<f64>]) -> Result<(WmseScore, bool)> {
        let s = self.wmse_score(inputs)?;
        let flag = s.wmse > self.threshold;
        Ok((s, flag))
    }

    pub fn objective(&self) -> WmseObjective<'_> {
        WmseObjective::new(&self.net, &self.weights)
    }
}

/// Weighted MSE as a smooth function of the concatenated normalized inputs.
pub struct WmseObjective<'a> {
    net: &'a MaeNetwork,
    weights: &'a [f64],
    offsets: Vec<usize>,
}

impl<'a> WmseObjective<'a> {
    pub fn new(net: &'a MaeNetwork, weights: &'a [f64]) -> Self {
        let mut offsets = vec![0];
        for d in net.input_dims() {
            offsets.push(offsets.last().expect("non-empty") + d);
        }
        Self { net, weights, offsets }
    }

    fn split<'b>(&self, z: ArrayView1<'b, f64>) -> Result<Vec<ArrayView1<'b, f64>>> {
        let total = *self.offsets.last().expect("non-empty");
        if z.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                got: z.len(),
            });
        }
        Ok(self.offsets.windows(2).map(|w| z.slice_move(s![w[0]..w[1]])).collect())
    }

    /// Splits a concatenated vector into per-type pieces.
    pub fn split_owned(&self, z: &Array1<f64>) -> Result<Vec<Array1<f64>>> {
        Ok(self.split(z.view())?.into_iter().map(|v| v.to_owned()).collect())
    }
}

impl SmoothScore for WmseObjective<'_> {
    fn dim(&self) -> usize {
        *self.offsets.last().expect("non-empty")
    }

    fn score(&self, z: ArrayView1<f64>) -> Result<f64> {
        let parts = self.split(z)?;
        Ok(weighted_mse(&self.net.per_type_mse(&parts)?, self.weights))
    }

    fn score_and_grad(&self, z: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        let parts = self.split(z)?;
        let (value, grads) = self.net.wmse_and_grad(&parts, self.weights)?;
        let views: Vec<_> = grads.iter().map(|g| g.view()).collect();
        let joined = ndarray::concatenate(ndarray::Axis(0), &views).expect("1-d pieces");
        Ok((value, joined))
    }
}

/// Contribution degrees for an MAE detection, spanning all types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeContribution {
    /// Estimate over the concatenation of all types' normalized inputs.
    pub combined: ContributionResult,
    /// `combined.eta` split back per type.
    pub per_type: Vec<Array1<f64>>,
}

/// Runs the lambda sweep against the wMSE; the stop level defaults to the wMSE threshold.
pub fn mae_estimate_contribution(
    model: &MaeModel,
    inputs: &[ArrayView1<f64>],
    cfg: &ContributionConfig,
) -> Result<MaeContribution> {
    let z = model.normalize(inputs)?;
    let views: Vec<_> = z.iter().map(|v| v.view()).collect();
    let joined = ndarray::concatenate(ndarray::Axis(0), &views).expect("1-d pieces");
    let objective = model.objective();
    let stop = cfg.mse_stop.unwrap_or(model.threshold);
    let combined = estimate_with(&objective, joined.view(), stop, cfg)?;
    let per_type = objective.split_owned(&combined.eta)?;
    Ok(MaeContribution { combined, per_type })
}

/// Fits per-type normalizers and runs the configured training stages on raw data.
pub fn train_mae(
    train: &[ArrayView2<f64>],
    arch: &MaeArchitecture,
    cfg: &MaeTrainConfig,
) -> Result<(MaeModel, MaeTrainReport)> {
    arch.validate()?;
    if train.len() != arch.types.len() {
        return Err(Error::InvalidInput(format!(
            "expected {} data types, got {}",
            arch.types.len(),
            train.len()
        )));
    }
    let normalizers = train.iter().map(|d| Normalizer::fit(*d)).collect::<Result<Vec<_>>>()?;
    let normalized = train
        .iter()
        .zip(&normalizers)
        .map(|(d, n)| n.normalize_rows(*d))
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<ArrayView2<f64>> = normalized.iter().map(|d| d.view()).collect();
    let mut net = arch.build(cfg.pretrain.seed)?;
    let mut report = MaeTrainReport::default();
    if cfg.pretraining {
        report.outer = pretrain_outer(&mut net, &views, &cfg.pretrain)?;
        report.inner = Some(pretrain_inner(&mut net, &views, &cfg.pretrain)?);
        report.finetune = finetune(&mut net, &views, &cfg.finetune)?;
    } else {
        let joint = crate::neuralnet::TrainConfig {
            epochs: cfg.pretrain.epochs + cfg.finetune.epochs,
            ..cfg.finetune.clone()
        };
        report.finetune = finetune(&mut net, &views, &joint)?;
    }
    let model = MaeModel::from_parts(net, normalizers, train)?;
    Ok((model, report))
}
