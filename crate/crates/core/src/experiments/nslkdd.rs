//! Intrusion benchmark: AE versus PCA AUROC over a small seed sweep, plus
//! per-class counts of the features that appear in the top ten absolute
//! contribution degrees of each detected communication.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Axis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_manifest, write_rows};
use crate::contribution::{estimate_contribution, top_k_dimensions, ContributionConfig};
use crate::datagen::{load_nslkdd, NslKddData, NslKddSchema, TrafficClass};
use crate::detector::{train_detector, AeArchitecture, AeDetector, PcaBaseline};
use crate::eval::{roc_auc, RocCurve};
use crate::neuralnet::{Activation, TrainConfig};
use crate::rng::{derive_seed, SeededRng};
use crate::{Error, Result};

pub const DATA_DIR_ENV: &str = "ANOMALENS_NSLKDD_DIR";
pub const TRAIN_FILE: &str = "KDDTrain+.txt";
pub const TEST_FILE: &str = "KDDTest-21.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NslKddParams {
    pub data_dir: PathBuf,
    pub train_file: String,
    pub test_file: String,
    pub seeds: Vec<u64>,
    pub hidden: usize,
    pub train: TrainConfig,
    pub pca_components: usize,
    /// Keep at most this many training normals (uniformly drawn).
    pub subsample: Option<usize>,
    pub top_k: usize,
    pub contribution: ContributionConfig,
}

impl NslKddParams {
    /// Five seeds, hidden 10 with ReLU, PCA with 10 components.
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            train_file: TRAIN_FILE.into(),
            test_file: TEST_FILE.into(),
            seeds: (0..5).collect(),
            hidden: 10,
            train: TrainConfig {
                epochs: 100,
                batch_size: 100,
                learning_rate: 0.5,
                weight_decay: 1e-6,
                seed: 0,
            },
            pca_components: 10,
            subsample: None,
            top_k: 10,
            contribution: ContributionConfig::default(),
        }
    }

    /// Reads the data directory from the environment.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(DATA_DIR_ENV).map(Self::new)
    }

    pub fn train_path(&self) -> PathBuf {
        self.data_dir.join(&self.train_file)
    }

    pub fn test_path(&self) -> PathBuf {
        self.data_dir.join(&self.test_file)
    }

    pub fn data_available(&self) -> bool {
        self.train_path().is_file() && self.test_path().is_file()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub ae_auroc: f64,
    pub pca_auroc: f64,
    pub threshold: f64,
    pub final_train_loss: f64,
    pub detected: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCount {
    pub class: String,
    pub feature: String,
    pub count: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct NslKddReport {
    pub seeds: Vec<SeedResult>,
    pub ae_auroc_max: f64,
    pub pca_auroc_max: f64,
    /// Seed whose AE reached `ae_auroc_max`; the frequency table comes from it.
    pub best_seed: u64,
    pub detected_per_class: BTreeMap<String, usize>,
    pub frequencies: Vec<FeatureCount>,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(skip)]
    pub ae_roc: RocCurve,
    #[serde(skip)]
    pub pca_roc: RocCurve,
}

impl NslKddReport {
    /// Features of `class` ranked by how often they were in the top list.
    pub fn top_features(&self, class: TrafficClass, n: usize) -> Vec<&str> {
        self.frequencies
            .iter()
            .filter(|f| f.class == class.name())
            .take(n)
            .map(|f| f.feature.as_str())
            .collect()
    }

    pub fn write(&self, dir: &Path, params: &NslKddParams, plotdata: bool) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_rows(&dir.join("nslkdd_auroc.csv"), &self.seeds)?;
        write_rows(&dir.join("nslkdd_top_features.csv"), &self.frequencies)?;
        if plotdata {
            #[derive(Serialize)]
            struct Row<'a> {
                detector: &'a str,
                threshold: f64,
                fpr: f64,
                tpr: f64,
            }
            let mut rows = Vec::new();
            for (name, roc) in [("ae", &self.ae_roc), ("pca", &self.pca_roc)] {
                rows.extend(roc.points.iter().map(|p| Row {
                    detector: name,
                    threshold: p.threshold,
                    fpr: p.fpr,
                    tpr: p.tpr,
                }));
            }
            write_rows(&dir.join("nslkdd_roc_plotdata.csv"), &rows)?;
        }
        write_manifest(dir, "nslkdd", params.seeds.clone(), params)
    }
}

/// Loads the training normals (optionally subsampled) and the labelled test set.
pub fn load_benchmark(params: &NslKddParams, schema: &NslKddSchema) -> Result<(NslKddData, NslKddData)> {
    for path in [params.train_path(), params.test_path()] {
        if !path.is_file() {
            return Err(Error::Data {
                path: path.clone(),
                line: 0,
                message: format!("file not found (set {DATA_DIR_ENV} to the directory holding the benchmark)"),
            });
        }
    }
    let full = load_nslkdd(&params.train_path(), schema, None)?;
    let mut normals = full.rows_of(TrafficClass::Normal);
    if let Some(k) = params.subsample {
        if k < normals.len() {
            let mut rng = SeededRng::new(derive_seed(params.seeds.first().copied().unwrap_or(0), u64::MAX));
            let mut picked: Vec<usize> = rng.sample_indices(normals.len(), k).into_iter().map(|i| normals[i]).collect();
            picked.sort_unstable();
            normals = picked;
        }
    }
    if normals.is_empty() {
        return Err(Error::EmptyData("no normal records in the training file".into()));
    }
    let train = NslKddData {
        vectors: full.vectors.select(Axis(0), &normals),
        labels: normals.iter().map(|&i| full.labels[i]).collect(),
        attack_names: normals.iter().map(|&i| full.attack_names[i].clone()).collect(),
        feature_names: full.feature_names.clone(),
        vocabulary: full.vocabulary.clone(),
    };
    let test = load_nslkdd(&params.test_path(), schema, Some(&full.vocabulary))?;
    Ok((train, test))
}

pub fn experiment_nslkdd(params: &NslKddParams) -> Result<NslKddReport> {
    let schema = NslKddSchema::standard();
    let (train, test) = load_benchmark(params, &schema)?;
    run_benchmark(params, &train, &test)
}

/// Runs the protocol on already loaded data.
pub fn run_benchmark(params: &NslKddParams, train: &NslKddData, test: &NslKddData) -> Result<NslKddReport> {
    if params.seeds.is_empty() {
        return Err(Error::Config("nslkdd experiment needs at least one seed".into()));
    }
    let anomalous: Vec<bool> = test.labels.iter().map(|c| *c != TrafficClass::Normal).collect();
    let arch = AeArchitecture::shallow(params.hidden, Activation::Relu, Activation::Identity);

    // PCA is deterministic, so it is fit once.
    let pca = PcaBaseline::fit(train.vectors.view(), params.pca_components)?;
    let pca_roc = roc_auc(&pca.score_rows(test.vectors.view())?, &anomalous)?;

    let trained = params
        .seeds
        .par_iter()
        .map(|&seed| -> Result<(AeDetector, SeedResult, RocCurve)> {
            let cfg = TrainConfig {
                seed,
                ..params.train.clone()
            };
            let (det, report) = train_detector(train.vectors.view(), &arch, &cfg)?;
            let scores = det.score_rows(test.vectors.view())?;
            let roc = roc_auc(&scores, &anomalous)?;
            let detected = scores.iter().filter(|&&s| s > det.threshold).count();
            let result = SeedResult {
                seed,
                ae_auroc: roc.auroc,
                pca_auroc: pca_roc.auroc,
                threshold: det.threshold,
                final_train_loss: report.final_loss().unwrap_or(f64::NAN),
                detected,
            };
            Ok((det, result, roc))
        })
        .collect::<Result<Vec<_>>>()?;

    // first seed wins ties
    let best = trained
        .iter()
        .enumerate()
        .fold(0, |b, (i, t)| if t.1.ae_auroc > trained[b].1.ae_auroc { i } else { b });
    let (det, best_result, ae_roc) = &trained[best];

    let explained = (0..test.vectors.nrows())
        .into_par_iter()
        .map(|i| -> Result<Option<(TrafficClass, Vec<usize>)>> {
            let x = test.vectors.row(i);
            if !det.is_anomalous(x)?.anomalous {
                return Ok(None);
            }
            let eta = estimate_contribution(det, x, &params.contribution)?.eta;
            let top = top_k_dimensions(eta.view(), params.top_k);
            Ok(Some((test.labels[i], top.entries.iter().map(|e| e.index).collect())))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut detected_per_class = BTreeMap::new();
    let mut counts: BTreeMap<TrafficClass, BTreeMap<usize, usize>> = BTreeMap::new();
    for (class, dims) in explained.into_iter().flatten() {
        *detected_per_class.entry(class.name().to_string()).or_insert(0) += 1;
        let table = counts.entry(class).or_default();
        for d in dims {
            *table.entry(d).or_insert(0) += 1;
        }
    }
    let mut frequencies = Vec::new();
    for (class, table) in counts {
        let mut ranked: Vec<(usize, usize)> = table.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        frequencies.extend(ranked.into_iter().enumerate().map(|(rank, (dim, count))| FeatureCount {
            class: class.name().to_string(),
            feature: test.feature_names[dim].clone(),
            count,
            rank: rank + 1,
        }));
    }

    let ae_auroc_max = trained.iter().map(|t| t.1.ae_auroc).fold(f64::NEG_INFINITY, f64::max);
    Ok(NslKddReport {
        best_seed: best_result.seed,
        seeds: trained.iter().map(|t| t.1.clone()).collect(),
        ae_auroc_max,
        pca_auroc_max: pca_roc.auroc,
        detected_per_class,
        frequencies,
        n_train: train.vectors.nrows(),
        n_test: test.vectors.nrows(),
        ae_roc: ae_roc.clone(),
        pca_roc,
    })
}
