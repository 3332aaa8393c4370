//! Simulated component telemetry with injectable faults.
//!
//! Each of `n_components` components has one free variable
//! `x_i ~ N(1000, 200^2)` and `dims_per_component - 1` correlated values
//! `(1 + 0.1 j) x_i^2 + N(beta, gamma^2)`. With the default interleaved
//! layout value `j` of component `i` lives at column `i + n_components * j`.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{AffectedDim, EventLabel};
use crate::rng::SeededRng;
use crate::{Error, Result};

pub const BASE_MEAN: f64 = 1000.0;
pub const BASE_STD: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SimLayout {
    /// Column `i + n_components * j`.
    #[default]
    Interleaved,
    /// Column `i * dims_per_component + j`.
    Block,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_components: usize,
    pub dims_per_component: usize,
    pub beta: f64,
    pub gamma: f64,
    pub n_records: usize,
    pub seed: u64,
    #[serde(default)]
    pub layout: SimLayout,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_components: 10,
            dims_per_component: 100,
            beta: 100.0,
            gamma: 50.0,
            n_records: 10_000,
            seed: 0,
            layout: SimLayout::Interleaved,
        }
    }
}

impl SimConfig {
    pub fn total_dims(&self) -> usize {
        self.n_components * self.dims_per_component
    }

    pub fn column(&self, component: usize, j: usize) -> usize {
        match self.layout {
            SimLayout::Interleaved => component + self.n_components * j,
            SimLayout::Block => component * self.dims_per_component + j,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_components == 0 || self.dims_per_component < 2 || self.n_records == 0 {
            return Err(Error::InvalidInput(format!(
                "simulation needs positive components, at least 2 dims per component and records \
                 (got {}, {}, {})",
                self.n_components, self.dims_per_component, self.n_records
            )));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidInput("gamma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.total_dims()];
        for i in 0..self.n_components {
            for j in 0..self.dims_per_component {
                names[self.column(i, j)] = format!("c{i}_v{j}");
            }
        }
        names
    }

    /// One record drawn from its own substream `(seed, index)`.
    pub fn record(&self, index: u64) -> Array1<f64> {
        let mut rng = SeededRng::substream(self.seed, index);
        let mut row = Array1::zeros(self.total_dims());
        for i in 0..self.n_components {
            let base = rng.normal(BASE_MEAN, BASE_STD);
            row[self.column(i, 0)] = base;
            for j in 1..self.dims_per_component {
                let noise = rng.normal(self.beta, self.gamma);
                row[self.column(i, j)] = (1.0 + 0.1 * j as f64) * base * base + noise;
            }
        }
        row
    }
}

/// `n_records` rows; record `t` depends only on `(seed, t)`.
pub fn gen_simulated(cfg: &SimConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    let mut data = Array2::zeros((cfg.n_records, cfg.total_dims()));
    for (t, mut row) in data.rows_mut().into_iter().enumerate() {
        row.assign(&cfg.record(t as u64));
    }
    Ok(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultDirection {
    Increase,
    Decrease,
}

impl FaultDirection {
    pub fn multiplier_range(self) -> (f64, f64) {
        match self {
            FaultDirection::Increase => (2.0, 10.0),
            FaultDirection::Decrease => (0.1, 0.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    /// Number of correlated values of the chosen component to scale.
    pub n_faulty: usize,
    pub direction: FaultDirection,
    /// Faulty component; drawn at random when `None`.
    pub component: Option<usize>,
}

/// Scales `n_faulty` correlated values of one component by a single random factor `r`.
pub fn inject_fault(
    record: ArrayView1<f64>,
    cfg: &SimConfig,
    spec: &FaultSpec,
    seed: u64,
) -> Result<(Array1<f64>, EventLabel)> {
    if record.len() != cfg.total_dims() {
        return Err(Error::DimensionMismatch {
            expected: cfg.total_dims(),
            got: record.len(),
        });
    }
    let correlated = cfg.dims_per_component - 1;
    if spec.n_faulty > correlated {
        return Err(Error::InvalidInput(format!(
            "cannot fault {} of {correlated} correlated values",
            spec.n_faulty
        )));
    }
    let mut out = record.to_owned();
    if spec.n_faulty == 0 {
        return Ok((out, EventLabel::empty(0, "none")));
    }
    let mut rng = SeededRng::new(seed);
    let component = match spec.component {
        Some(c) if c >= cfg.n_components => {
            return Err(Error::InvalidInput(format!("component {c} out of range")));
        }
        Some(c) => c,
        None => rng.below(cfg.n_components),
    };
    let (lo, hi) = spec.direction.multiplier_range();
    let r = rng.uniform_range(lo, hi);
    let dims: BTreeSet<usize> = rng
        .sample_indices(correlated, spec.n_faulty)
        .into_iter()
        .map(|k| cfg.column(component, k + 1))
        .collect();
    for &d in &dims {
        out[d] *= r;
    }
    let tag = format!(
        "{} component={component} r={r}",
        match spec.direction {
            FaultDirection::Increase => "increase",
            FaultDirection::Decrease => "decrease",
        }
    );
    let label = EventLabel {
        timestamp: 0,
        duration: 1,
        tag,
        affected: dims
            .into_iter()
            .map(|dim| AffectedDim {
                data_type: "sim".into(),
                dim,
            })
            .collect(),
    };
    Ok((out, label))
}
