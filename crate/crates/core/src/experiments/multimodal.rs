//! Synthetic cross-domain experiments for the multimodal autoencoder:
//! the pre-training comparison, the learnability-weighting trials and an
//! event-level detection run at a fixed false-positive rate.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_manifest, write_rows};
use crate::contribution::ContributionConfig;
use crate::datagen::{gen_multimodal, random_faults, FaultKind, MultimodalConfig, MultimodalData, MultimodalFault};
use crate::detector::{train_detector, AeArchitecture, AeDetector};
use crate::eval::{event_tpr_fpr, normal_bin_mask, threshold_for_fpr, EventMetrics, EventWindowConfig};
use crate::multimodal::{mae_estimate_contribution, per_type_training_mse, train_mae, MaeArchitecture, MaeModel, MaeTrainConfig, ModalitySpec};
use crate::neuralnet::TrainConfig;
use crate::rng::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalParams {
    pub generator: MultimodalConfig,
    pub n_train: usize,
    pub n_test: usize,
    /// Second-layer width per type, in generator type order.
    pub second: Vec<usize>,
    pub shared: usize,
    pub train: MaeTrainConfig,
    /// Faults in the event-detection run.
    pub n_faults: usize,
    pub target_fpr: f64,
    pub window: EventWindowConfig,
    /// Training seeds averaged in the pre-training comparison.
    pub comparison_seeds: usize,
    /// Learnability trials: one spiked record per trial.
    pub trials: usize,
    pub spike_magnitude: f64,
    pub spike_dims: usize,
    pub contribution: ContributionConfig,
    pub seed: u64,
}

impl Default for MultimodalParams {
    fn default() -> Self {
        let step = TrainConfig {
            epochs: 500,
            batch_size: 50,
            learning_rate: 0.05,
            weight_decay: 1e-6,
            seed: 0,
        };
        Self {
            generator: MultimodalConfig::default(),
            n_train: 2000,
            n_test: 2000,
            second: vec![24, 12, 40],
            shared: 12,
            train: MaeTrainConfig {
                pretrain: step.clone(),
                finetune: step,
                pretraining: true,
            },
            n_faults: 20,
            comparison_seeds: 5,
            target_fpr: 0.03,
            window: EventWindowConfig::default(),
            trials: 10,
            spike_magnitude: 1.0,
            spike_dims: 3,
            contribution: ContributionConfig::default(),
            seed: 0,
        }
    }
}

impl MultimodalParams {
    pub fn architecture(&self) -> Result<MaeArchitecture> {
        if self.second.len() != self.generator.types.len() {
            return Err(Error::Config(format!(
                "{} second-layer widths for {} data types",
                self.second.len(),
                self.generator.types.len()
            )));
        }
        let types = self
            .generator
            .types
            .iter()
            .zip(&self.second)
            .map(|(t, &w)| ModalitySpec::new(&t.name, t.dims, w))
            .collect();
        let arch = MaeArchitecture::new(types, self.shared);
        arch.validate()?;
        Ok(arch)
    }

    pub fn train_config(&self, seed: u64, pretraining: bool) -> MaeTrainConfig {
        MaeTrainConfig {
            pretrain: TrainConfig {
                seed,
                ..self.train.pretrain.clone()
            },
            finetune: TrainConfig {
                seed: derive_seed(seed, 1),
                ..self.train.finetune.clone()
            },
            pretraining,
        }
    }

    /// Epochs a model trained in one go receives.
    fn total_epochs(&self) -> usize {
        self.train.pretrain.epochs + self.train.finetune.epochs
    }

    /// Plain five-layer AE over the concatenated record with the MAE's widths.
    pub fn merged_architecture(&self) -> AeArchitecture {
        AeArchitecture::five_layer(self.second.iter().sum(), self.shared)
    }

    /// Per-type five-layer AE; the shared width is split evenly across types.
    pub fn per_type_architecture(&self, k: usize) -> AeArchitecture {
        let n = self.second.len();
        let bottleneck = self.shared / n + usize::from(k < self.shared % n);
        AeArchitecture::five_layer(self.second[k], bottleneck.max(1))
    }

    fn plain_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.total_epochs(),
            seed,
            ..self.train.finetune.clone()
        }
    }
}

fn views(data: &[Array2<f64>]) -> Vec<ArrayView2<'_, f64>> {
    data.iter().map(|d| d.view()).collect()
}

fn normalized(model: &MaeModel, data: &[ArrayView2<f64>]) -> Result<Vec<Array2<f64>>> {
    model.normalizers.iter().zip(data).map(|(n, d)| n.normalize_rows(*d)).collect()
}

/// Per-type training MSE of the three model families for one training seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRun {
    pub seed: u64,
    pub mae: Vec<f64>,
    pub mae_without_pretraining: Vec<f64>,
    pub per_type_ae: Vec<f64>,
}

/// Seed-averaged per-type training MSE of the three model families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainComparison {
    pub types: Vec<String>,
    pub mae: Vec<f64>,
    pub mae_without_pretraining: Vec<f64>,
    pub per_type_ae: Vec<f64>,
    pub runs: Vec<ComparisonRun>,
}

impl PretrainComparison {
    /// Types where pre-training did not hurt.
    pub fn pretraining_wins(&self) -> usize {
        self.mae.iter().zip(&self.mae_without_pretraining).filter(|(a, b)| a <= b).count()
    }

    /// Types where the MAE matches or beats the independent AE.
    pub fn mae_beats_per_type(&self) -> usize {
        self.mae.iter().zip(&self.per_type_ae).filter(|(a, b)| a <= b).count()
    }
}

#[derive(Debug, Clone, Serialize)]
struct ComparisonRow<'a> {
    seed: Option<u64>,
    model: &'a str,
    data_type: &'a str,
    mse: f64,
}

fn comparison_run(params: &MultimodalParams, train: &[ArrayView2<f64>], seed: u64) -> Result<ComparisonRun> {
    let arch = params.architecture()?;
    let (with, _) = train_mae(train, &arch, &params.train_config(seed, true))?;
    let (without, _) = train_mae(train, &arch, &params.train_config(seed, false))?;
    let norm_with = normalized(&with, train)?;
    let norm_without = normalized(&without, train)?;
    let per_type_ae = (0..train.len())
        .map(|k| -> Result<f64> {
            let cfg = params.plain_config(derive_seed(seed, 100 + k as u64));
            let (det, _) = train_detector(train[k], &params.per_type_architecture(k), &cfg)?;
            let scores = det.score_rows(train[k])?;
            Ok(scores.iter().sum::<f64>() / scores.len() as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonRun {
        seed,
        mae: per_type_training_mse(&with.net, &views(&norm_with))?,
        mae_without_pretraining: per_type_training_mse(&without.net, &views(&norm_without))?,
        per_type_ae,
    })
}

fn column_means(rows: &[&Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    (0..rows[0].len()).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect()
}

/// Trains the MAE with and without pre-training and one AE per type on the
/// same clean data and compares per-type training MSE in normalized units,
/// averaged over `comparison_seeds` training seeds.
pub fn pretraining_comparison(params: &MultimodalParams) -> Result<PretrainComparison> {
    if params.comparison_seeds == 0 {
        return Err(Error::Config("comparison_seeds must be positive".into()));
    }
    params.architecture()?;
    let data = gen_multimodal(&params.generator, params.n_train, params.seed, &[])?;
    let train = views(&data.data);
    let runs = (0..params.comparison_seeds as u64)
        .into_par_iter()
        .map(|i| comparison_run(params, &train, derive_seed(derive_seed(params.seed, 10), i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PretrainComparison {
        types: data.names.clone(),
        mae: column_means(&runs.iter().map(|r| &r.mae).collect::<Vec<_>>()),
        mae_without_pretraining: column_means(&runs.iter().map(|r| &r.mae_without_pretraining).collect::<Vec<_>>()),
        per_type_ae: column_means(&runs.iter().map(|r| &r.per_type_ae).collect::<Vec<_>>()),
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnabilityTrial {
    pub trial: usize,
    pub seed: u64,
    pub target_type: String,
    pub wmse: f64,
    pub wmse_threshold: f64,
    pub wmse_exceeded: bool,
    pub merged_mse: f64,
    pub merged_threshold: f64,
    pub merged_exceeded: bool,
}

impl LearnabilityTrial {
    /// The weighted score flags the spike while the merged AE does not.
    pub fn separates(&self) -> bool {
        self.wmse_exceeded && !self.merged_exceeded
    }
}

fn merged_detector(params: &MultimodalParams, data: &[ArrayView2<f64>], seed: u64) -> Result<AeDetector> {
    let views: Vec<_> = data.to_vec();
    let joined = ndarray::concatenate(ndarray::Axis(1), &views).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let (det, _) = train_detector(joined.view(), &params.merged_architecture(), &params.plain_config(seed))?;
    Ok(det)
}

fn one_trial(params: &MultimodalParams, trial: usize) -> Result<LearnabilityTrial> {
    let seed = derive_seed(derive_seed(params.seed, 20), trial as u64);
    let arch = params.architecture()?;
    let clean = gen_multimodal(&params.generator, params.n_train, seed, &[])?;
    let train = views(&clean.data);
    let (mae, _) = train_mae(&train, &arch, &params.train_config(derive_seed(seed, 1), true))?;
    let merged = merged_detector(params, &train, derive_seed(seed, 2))?;

    // ties go to the first type
    let target = mae.nu.iter().enumerate().fold(0, |b, (k, v)| if *v < mae.nu[b] { k } else { b });
    let fault = MultimodalFault {
        kind: FaultKind::CounterSpike {
            data_type: clean.names[target].clone(),
        },
        timestamp: params.n_train,
        duration: 1,
        magnitude: params.spike_magnitude,
        n_dims: params.spike_dims,
    };
    let faulty = gen_multimodal(&params.generator, params.n_train + 1, seed, &[fault])?;
    let record: Vec<_> = faulty.data.iter().map(|d| d.row(params.n_train)).collect();
    let (score, wmse_exceeded) = mae.is_anomalous(&record)?;
    let joined = faulty.concatenated();
    let decision = merged.is_anomalous(joined.row(params.n_train))?;
    Ok(LearnabilityTrial {
        trial,
        seed,
        target_type: clean.names[target].clone(),
        wmse: score.wmse,
        wmse_threshold: mae.threshold,
        wmse_exceeded,
        merged_mse: decision.score,
        merged_threshold: merged.threshold,
        merged_exceeded: decision.anomalous,
    })
}

/// Spikes the most learnable type in one record per trial.
pub fn learnability_trials(params: &MultimodalParams) -> Result<Vec<LearnabilityTrial>> {
    (0..params.trials).into_par_iter().map(|t| one_trial(params, t)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub timestamp: usize,
    pub tag: String,
    pub mae_detected: bool,
    pub merged_detected: bool,
    /// Type holding the largest share of `|eta|` at the event's peak bin.
    pub top_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultimodalReport {
    pub comparison: PretrainComparison,
    pub trials: Vec<LearnabilityTrial>,
    pub mae: EventMetrics,
    pub merged: EventMetrics,
    pub mae_threshold: f64,
    pub merged_threshold: f64,
    pub nu: Vec<f64>,
    pub weights: Vec<f64>,
    pub events: Vec<EventRow>,
    #[serde(skip)]
    pub mae_scores: Vec<f64>,
    #[serde(skip)]
    pub merged_scores: Vec<f64>,
}

impl MultimodalReport {
    pub fn separating_trials(&self) -> usize {
        self.trials.iter().filter(|t| t.separates()).count()
    }

    pub fn write(&self, dir: &Path, params: &MultimodalParams, plotdata: bool) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let c = &self.comparison;
        let mut rows = Vec::new();
        let runs = c.runs.iter().map(|r| (Some(r.seed), &r.mae, &r.mae_without_pretraining, &r.per_type_ae));
        for (seed, mae, without, per_type) in runs.chain([(None, &c.mae, &c.mae_without_pretraining, &c.per_type_ae)]) {
            for (k, name) in c.types.iter().enumerate() {
                for (model, v) in [("mae", mae), ("mae_without_pretraining", without), ("per_type_ae", per_type)] {
                    rows.push(ComparisonRow {
                        seed,
                        model,
                        data_type: name,
                        mse: v[k],
                    });
                }
            }
        }
        write_rows(&dir.join("multimodal_training_mse.csv"), &rows)?;
        write_rows(&dir.join("multimodal_learnability.csv"), &self.trials)?;
        write_rows(&dir.join("multimodal_events.csv"), &self.events)?;
        #[derive(Serialize)]
        struct Detection<'a> {
            model: &'a str,
            threshold: f64,
            tpr: f64,
            fpr: f64,
            detected: usize,
            events: usize,
        }
        let detections = [("mae", &self.mae, self.mae_threshold), ("merged_ae", &self.merged, self.merged_threshold)]
            .map(|(model, m, threshold)| Detection {
                model,
                threshold,
                tpr: m.tpr,
                fpr: m.fpr,
                detected: m.detected.iter().filter(|d| **d).count(),
                events: self.events.len(),
            });
        write_rows(&dir.join("multimodal_detection.csv"), &detections)?;
        if plotdata {
            #[derive(Serialize)]
            struct Row<'a> {
                model: &'a str,
                bin: usize,
                score: f64,
            }
            let mut rows = Vec::new();
            for (model, scores) in [("mae", &self.mae_scores), ("merged_ae", &self.merged_scores)] {
                rows.extend(scores.iter().enumerate().map(|(bin, &score)| Row { model, bin, score }));
            }
            write_rows(&dir.join("multimodal_scores_plotdata.csv"), &rows)?;
        }
        write_manifest(dir, "multimodal", vec![params.seed], params)
    }
}

/// Scores a fault-laden test stream with both detectors at the target FPR.
fn detection_run(
    params: &MultimodalParams,
    mae: &MaeModel,
    merged: &AeDetector,
) -> Result<(MultimodalData, Vec<f64>, Vec<f64>)> {
    let test_seed = derive_seed(params.seed, 30);
    let faults = random_faults(&params.generator, params.n_test, params.n_faults, derive_seed(test_seed, 1));
    let test = gen_multimodal(&params.generator, params.n_test, test_seed, &faults)?;
    let mae_scores: Vec<f64> = mae.score_rows(&views(&test.data))?.into_iter().map(|s| s.wmse).collect();
    let merged_scores = merged.score_rows(test.concatenated().view())?;
    Ok((test, mae_scores, merged_scores))
}

fn threshold_on_normals(scores: &[f64], mask: &[bool], target: f64) -> Result<f64> {
    let normal: Vec<f64> = scores.iter().zip(mask).filter(|(_, m)| **m).map(|(s, _)| *s).collect();
    threshold_for_fpr(&normal, target)
}

pub fn experiment_multimodal(params: &MultimodalParams) -> Result<MultimodalReport> {
    let comparison = pretraining_comparison(params)?;
    let trials = learnability_trials(params)?;

    let arch = params.architecture()?;
    let clean = gen_multimodal(&params.generator, params.n_train, params.seed, &[])?;
    let train = views(&clean.data);
    let seed = derive_seed(params.seed, 10);
    let (mae, _) = train_mae(&train, &arch, &params.train_config(seed, true))?;
    let merged = merged_detector(params, &train, derive_seed(seed, 2))?;
    let (test, mae_scores, merged_scores) = detection_run(params, &mae, &merged)?;

    let mask = normal_bin_mask(params.n_test, &test.events, &params.window);
    let mae_threshold = threshold_on_normals(&mae_scores, &mask, params.target_fpr)?;
    let merged_threshold = threshold_on_normals(&merged_scores, &mask, params.target_fpr)?;
    let mae_metrics = event_tpr_fpr(&mae_scores, mae_threshold, &test.events, &params.window);
    let merged_metrics = event_tpr_fpr(&merged_scores, merged_threshold, &test.events, &params.window);

    let mae = mae.with_threshold(mae_threshold);
    let mut events = Vec::new();
    for (i, e) in test.events.iter().enumerate() {
        let peak = (e.timestamp..(e.timestamp + e.duration.max(1)).min(params.n_test))
            .max_by(|&a, &b| mae_scores[a].total_cmp(&mae_scores[b]));
        let top_type = match peak {
            Some(t) if mae_scores[t] > mae_threshold => {
                let record: Vec<_> = test.data.iter().map(|d| d.row(t)).collect();
                let c = mae_estimate_contribution(&mae, &record, &params.contribution)?;
                let shares: Vec<f64> = c.per_type.iter().map(|v| v.iter().map(|x| x.abs()).sum()).collect();
                let best = shares.iter().enumerate().fold(0, |b, (k, v)| if *v > shares[b] { k } else { b });
                (shares[best] > 0.0).then(|| test.names[best].clone())
            }
            _ => None,
        };
        events.push(EventRow {
            timestamp: e.timestamp,
            tag: e.tag.clone(),
            mae_detected: mae_metrics.detected[i],
            merged_detected: merged_metrics.detected[i],
            top_type,
        });
    }

    Ok(MultimodalReport {
        comparison,
        trials,
        mae: mae_metrics,
        merged: merged_metrics,
        mae_threshold,
        merged_threshold,
        nu: mae.nu.clone(),
        weights: mae.weights.clone(),
        events,
        mae_scores,
        merged_scores,
    })
}
