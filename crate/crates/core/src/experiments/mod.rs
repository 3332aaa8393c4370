//! Experiment drivers. Each one is fully seeded, returns a typed report and
//! can write its results, a manifest and optional long-format plot data.

mod multimodal;
mod nslkdd;
mod sim61;

pub use multimodal::{
    experiment_multimodal, learnability_trials, pretraining_comparison, ComparisonRun, EventRow, LearnabilityTrial, MultimodalParams,
    MultimodalReport, PretrainComparison,
};
pub use nslkdd::{
    experiment_nslkdd, load_benchmark, run_benchmark, FeatureCount, NslKddParams, NslKddReport, SeedResult, DATA_DIR_ENV,
    TEST_FILE, TRAIN_FILE,
};
pub use sim61::{experiment_sim61, MetricSummary, Sim61Cell, Sim61Params, Sim61Report, Sim61Run, METRICS};

use std::path::Path;

use serde::Serialize;

use crate::Result;

/// Written next to every experiment's results.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub experiment: &'a str,
    pub version: &'a str,
    pub seeds: Vec<u64>,
    pub config: &'a C,
}

pub fn write_manifest<C: Serialize>(dir: &Path, experiment: &str, seeds: Vec<u64>, config: &C) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = Manifest {
        experiment,
        version: env!("CARGO_PKG_VERSION"),
        seeds,
        config,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

/// Writes serializable rows to a headered CSV.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
