//! Fault localization on simulated component data: the contribution degree
//! against outlier degree, reconstruction error and contribution without L1.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_manifest, write_rows};
use crate::contribution::{
    contribution_without_l1, estimate_contribution, estimated_dimension_set, recall_precision, ContributionConfig,
};
use crate::datagen::{gen_simulated, inject_fault, FaultDirection, FaultSpec, SimConfig};
use crate::detector::{train_detector, AeArchitecture};
use crate::eval::{bootstrap_mean_ci, Interval};
use crate::neuralnet::{Activation, TrainConfig};
use crate::rng::derive_seed;
use crate::Result;

pub const METRICS: [&str; 4] = ["contribution", "outlier_degree", "reconstruction_error", "contribution_without_l1"];

/// One parameter cell of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sim61Cell {
    pub n_faulty: usize,
    pub beta: f64,
    pub gamma: f64,
    pub direction: FaultDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sim61Params {
    /// Shape and noise of the generator; `beta`, `gamma` and `seed` are set per cell and run.
    pub sim: SimConfig,
    pub cells: Vec<Sim61Cell>,
    pub runs: usize,
    pub hidden: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub train: TrainConfig,
    pub contribution: ContributionConfig,
    pub seed: u64,
}

impl Sim61Params {
    /// 1000 dims, 10,000 training records, hidden 10, batch and epochs 500.
    pub fn full_scale() -> Self {
        Self {
            sim: SimConfig::default(),
            cells: vec![Sim61Cell {
                n_faulty: 10,
                beta: 100.0,
                gamma: 50.0,
                direction: FaultDirection::Increase,
            }],
            runs: 10,
            hidden: 10,
            hidden_activation: Activation::Sigmoid,
            output_activation: Activation::Identity,
            train: TrainConfig {
                epochs: 500,
                batch_size: 500,
                learning_rate: 6.0,
                weight_decay: 1e-6,
                seed: 0,
            },
            contribution: ContributionConfig::default(),
            seed: 0,
        }
    }

    /// The 2 x 2 grid over `n_f` and `(beta, gamma)`.
    pub fn full_grid() -> Self {
        let mut p = Self::full_scale();
        p.cells = [10, 30]
            .iter()
            .flat_map(|&n| {
                [(100.0, 50.0), (200.0, 50.0)].map(|(beta, gamma)| Sim61Cell {
                    n_faulty: n,
                    beta,
                    gamma,
                    direction: FaultDirection::Increase,
                })
            })
            .collect();
        p
    }

    /// At 0.1: 5 components of 20 dims, 1,000 records and 2 faulty dims.
    pub fn scaled(scale: f64) -> Self {
        Self::full_scale().with_scale(scale)
    }

    /// Shrinks dims and records by `scale`, keeping the cells' faulty share.
    pub fn with_scale(self, scale: f64) -> Self {
        let mut p = self;
        if (scale - 1.0).abs() < 1e-12 {
            return p;
        }
        let dims = ((1000.0 * scale).round() as usize).max(4);
        let n_components = (dims / 20).max(1);
        p.sim.n_components = n_components;
        p.sim.dims_per_component = dims / n_components;
        p.sim.n_records = ((10_000.0 * scale).round() as usize).max(100);
        p.hidden = n_components;
        p.train.batch_size = (p.train.batch_size as f64 * scale).round().max(10.0) as usize;
        for c in &mut p.cells {
            // keep the faulty share of a component fixed
            let share = c.n_faulty as f64 / 100.0;
            c.n_faulty = ((share * p.sim.dims_per_component as f64).round() as usize).clamp(1, p.sim.dims_per_component - 1);
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sim61Run {
    pub cell: usize,
    pub run: usize,
    pub seed: u64,
    pub mse: f64,
    pub threshold: f64,
    pub exceeded: bool,
    pub final_train_loss: f64,
    /// `(recall, precision)` per metric in [`METRICS`] order.
    pub scores: Vec<(f64, f64)>,
    pub truth: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub cell: usize,
    pub metric: String,
    pub n_faulty: usize,
    pub beta: f64,
    pub gamma: f64,
    pub recall: Interval,
    pub precision: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sim61Report {
    pub runs: Vec<Sim61Run>,
    pub summary: Vec<MetricSummary>,
}

impl Sim61Report {
    pub fn summary_for(&self, cell: usize, metric: &str) -> Option<&MetricSummary> {
        self.summary.iter().find(|s| s.cell == cell && s.metric == metric)
    }

    pub fn all_exceeded(&self) -> bool {
        self.runs.iter().all(|r| r.exceeded)
    }

    pub fn write(&self, dir: &Path, params: &Sim61Params, plotdata: bool) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        #[derive(Serialize)]
        struct Row<'a> {
            metric: &'a str,
            n_faulty: usize,
            beta: f64,
            gamma: f64,
            mean_recall: f64,
            recall_low: f64,
            recall_high: f64,
            mean_precision: f64,
            precision_low: f64,
            precision_high: f64,
        }
        let rows: Vec<Row> = self
            .summary
            .iter()
            .map(|s| Row {
                metric: &s.metric,
                n_faulty: s.n_faulty,
                beta: s.beta,
                gamma: s.gamma,
                mean_recall: s.recall.mean,
                recall_low: s.recall.low,
                recall_high: s.recall.high,
                mean_precision: s.precision.mean,
                precision_low: s.precision.low,
                precision_high: s.precision.high,
            })
            .collect();
        write_rows(&dir.join("sim61_summary.csv"), &rows)?;
        if plotdata {
            #[derive(Serialize)]
            struct Long<'a> {
                cell: usize,
                run: usize,
                metric: &'a str,
                measure: &'a str,
                value: f64,
            }
            let mut long = Vec::new();
            for r in &self.runs {
                for (m, &(rec, prec)) in METRICS.iter().zip(&r.scores) {
                    long.push(Long { cell: r.cell, run: r.run, metric: m, measure: "recall", value: rec });
                    long.push(Long { cell: r.cell, run: r.run, metric: m, measure: "precision", value: prec });
                }
            }
            write_rows(&dir.join("sim61_plotdata.csv"), &long)?;
        }
        write_manifest(dir, "sim61", self.runs.iter().map(|r| r.seed).collect(), params)
    }
}

fn run_once(params: &Sim61Params, cell_index: usize, run: usize) -> Result<Sim61Run> {
    let cell = params.cells[cell_index];
    let seed = derive_seed(derive_seed(params.seed, cell_index as u64), run as u64);
    let sim = SimConfig {
        beta: cell.beta,
        gamma: cell.gamma,
        seed,
        ..params.sim.clone()
    };
    let train = gen_simulated(&sim)?;
    let arch = AeArchitecture::shallow(params.hidden, params.hidden_activation, params.output_activation);
    let cfg = TrainConfig {
        seed: derive_seed(seed, 1),
        ..params.train.clone()
    };
    let (det, report) = train_detector(train.view(), &arch, &cfg)?;
    // The test record comes from the same stream, just past the training rows.
    let clean = sim.record(sim.n_records as u64);
    let spec = FaultSpec {
        n_faulty: cell.n_faulty,
        direction: cell.direction,
        component: None,
    };
    let (faulty, label) = inject_fault(clean.view(), &sim, &spec, derive_seed(seed, 2))?;
    let truth: BTreeSet<usize> = label.dims();
    let decision = det.is_anomalous(faulty.view())?;

    let vectors = [
        estimate_contribution(&det, faulty.view(), &params.contribution)?.eta,
        det.outlier_degree(faulty.view())?,
        det.reconstruction_error_vector(faulty.view())?,
        contribution_without_l1(&det, faulty.view(), &params.contribution)?.eta,
    ];
    let scores = vectors
        .iter()
        .map(|v| recall_precision(&estimated_dimension_set(v.view()), &truth))
        .collect();
    Ok(Sim61Run {
        cell: cell_index,
        run,
        seed,
        mse: decision.score,
        threshold: det.threshold,
        exceeded: decision.anomalous,
        final_train_loss: report.final_loss().unwrap_or(f64::NAN),
        scores,
        truth: truth.into_iter().collect(),
    })
}

/// Runs every cell `runs` times (runs execute in parallel, each fully seeded).
pub fn experiment_sim61(params: &Sim61Params) -> Result<Sim61Report> {
    let jobs: Vec<(usize, usize)> = (0..params.cells.len())
        .flat_map(|c| (0..params.runs).map(move |r| (c, r)))
        .collect();
    let mut runs = jobs
        .par_iter()
        .map(|&(c, r)| run_once(params, c, r))
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(|r| (r.cell, r.run));
    let mut summary = Vec::new();
    for (ci, cell) in params.cells.iter().enumerate() {
        let cell_runs: Vec<&Sim61Run> = runs.iter().filter(|r| r.cell == ci).collect();
        for (m, name) in METRICS.iter().enumerate() {
            let recalls: Vec<f64> = cell_runs.iter().map(|r| r.scores[m].0).collect();
            let precisions: Vec<f64> = cell_runs.iter().map(|r| r.scores[m].1).collect();
            let boot_seed = derive_seed(params.seed, 1000 + (ci * METRICS.len() + m) as u64);
            summary.push(MetricSummary {
                cell: ci,
                metric: name.to_string(),
                n_faulty: cell.n_faulty,
                beta: cell.beta,
                gamma: cell.gamma,
                recall: bootstrap_mean_ci(&recalls, 1000, boot_seed),
                precision: bootstrap_mean_ci(&precisions, 1000, boot_seed ^ 1),
            });
        }
    }
    Ok(Sim61Report { runs, summary })
}
