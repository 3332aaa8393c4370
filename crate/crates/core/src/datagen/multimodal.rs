//! Synthetic cross-domain telemetry: flow-like and MIB-like gauges plus
//! syslog-like template counts, all driven by shared latent factors.
//!
//! Each time bin draws a shared latent `z` (its first coordinate follows a
//! daily cycle, standing in for traffic intensity) and, per data type, a
//! type-specific latent `w_k`. Type `k` observes `v_k = (c_k z, sqrt(1-c_k^2) w_k)`
//! where `c_k` is its coupling strength:
//!
//! * gauge readout: `x_j = base_j + unit_j (L_j . v_k + noise_k e_j)`
//! * count readout: `x_j ~ Poisson(rate_j max(0, 1 + 0.2 L_j . v_k))`; the last
//!   dimension of a count type is the "newly appeared template" slot with a
//!   tiny background rate and no latent dependence.
//!
//! With `noise_scale = 0` gauges are noiseless and counts take their expected
//! rates, so every record is an exact affine function of the latents.
//! Loadings, bases and rates come from `structure_seed`; the stream seed only
//! drives the per-bin draws, so training and test streams share one structure.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{AffectedDim, EventLabel};
use crate::rng::{derive_seed, SeededRng};
use crate::{Error, Result};

const COUNT_MODULATION: f64 = 0.2;
const NEW_TEMPLATE_RATE: f64 = 0.01;
// per-template rates are log-uniform in this range
const MIN_RATE: f64 = 20.0;
const MAX_RATE: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    Gauge,
    Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeLayout {
    pub name: String,
    pub dims: usize,
    pub readout: Readout,
    /// Gauge noise in units of the per-dimension signal scale (ignored for counts).
    pub noise: f64,
    /// Share of the latent signal coming from the shared factors, in `[0, 1]`.
    pub coupling: f64,
}

impl TypeLayout {
    pub fn gauge(name: &str, dims: usize, noise: f64, coupling: f64) -> Self {
        Self {
            name: name.into(),
            dims,
            readout: Readout::Gauge,
            noise,
            coupling,
        }
    }

    pub fn counts(name: &str, dims: usize, coupling: f64) -> Self {
        Self {
            name: name.into(),
            dims,
            readout: Readout::Counts,
            noise: 0.0,
            coupling,
        }
    }

    fn feature_names(&self) -> Vec<String> {
        match self.readout {
            Readout::Gauge => (0..self.dims).map(|j| format!("{}_{j:03}", self.name)).collect(),
            Readout::Counts => (0..self.dims)
                .map(|j| {
                    if j + 1 == self.dims {
                        format!("{}_new", self.name)
                    } else {
                        format!("{}_tpl{j:03}", self.name)
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalConfig {
    pub structure_seed: u64,
    pub shared_latents: usize,
    pub specific_latents: usize,
    /// Bins per daily cycle.
    pub period: usize,
    /// Global multiplier on gauge noise; zero also switches counts to expected rates.
    pub noise_scale: f64,
    pub types: Vec<TypeLayout>,
}

impl Default for MultimodalConfig {
    fn default() -> Self {
        Self {
            structure_seed: 0,
            shared_latents: 2,
            specific_latents: 3,
            period: 288,
            noise_scale: 1.0,
            types: vec![
                TypeLayout::gauge("flow", 32, 0.1, 0.7),
                TypeLayout::gauge("mib", 14, 0.03, 0.7),
                TypeLayout::counts("syslog", 68, 0.7),
            ],
        }
    }
}

impl MultimodalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.types.is_empty() {
            return Err(Error::Config("multimodal generator needs at least one type".into()));
        }
        if self.shared_latents == 0 || self.period == 0 {
            return Err(Error::Config("shared_latents and period must be positive".into()));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config("noise_scale must be finite and non-negative".into()));
        }
        let mut seen = BTreeSet::new();
        for t in &self.types {
            if !seen.insert(t.name.as_str()) {
                return Err(Error::Config(format!("duplicate type name '{}'", t.name)));
            }
            let min_dims = if t.readout == Readout::Counts { 2 } else { 1 };
            if t.dims < min_dims {
                return Err(Error::Config(format!("type '{}' needs at least {min_dims} dims", t.name)));
            }
            if !(0.0..=1.0).contains(&t.coupling) || !(t.noise >= 0.0 && t.noise.is_finite()) {
                return Err(Error::Config(format!("type '{}' has invalid noise or coupling", t.name)));
            }
        }
        Ok(())
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.types.iter().position(|t| t.name == name)
    }

    /// Dimension of the affine span of noise-free records.
    pub fn latent_rank(&self) -> usize {
        self.shared_latents + self.types.len() * self.specific_latents
    }

    fn latent_dim(&self) -> usize {
        self.shared_latents + self.specific_latents
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    /// Traffic surge hitting `n_dims` dimensions of every gauge type.
    VolumeFlood,
    /// Counter jump on `n_dims` dimensions of one type.
    CounterSpike { data_type: String },
    /// Burst of never-seen templates in every count type's extra slot.
    NovelTemplate,
    /// One type follows an independent copy of the shared latents.
    Decoupling { data_type: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalFault {
    #[serde(flatten)]
    pub kind: FaultKind,
    pub timestamp: usize,
    pub duration: usize,
    /// Shift in units of each dimension's signal scale (counts for template bursts).
    pub magnitude: f64,
    pub n_dims: usize,
}

impl MultimodalFault {
    fn tag(&self) -> String {
        match &self.kind {
            FaultKind::VolumeFlood => "volume_flood".into(),
            FaultKind::CounterSpike { data_type } => format!("counter_spike {data_type}"),
            FaultKind::NovelTemplate => "novel_template".into(),
            FaultKind::Decoupling { data_type } => format!("decoupling {data_type}"),
        }
    }

    fn active(&self, t: usize) -> bool {
        t >= self.timestamp && t < self.timestamp + self.duration
    }
}

/// Evenly spread faults cycling through the four archetypes.
pub fn random_faults(cfg: &MultimodalConfig, n_records: usize, count: usize, seed: u64) -> Vec<MultimodalFault> {
    let mut rng = SeededRng::new(seed);
    let gauges: Vec<&TypeLayout> = cfg.types.iter().filter(|t| t.readout == Readout::Gauge).collect();
    let slot = n_records / count.max(1);
    (0..count)
        .map(|i| {
            let duration = 3;
            let jitter = if slot > duration + 2 { rng.below(slot - duration - 1) } else { 0 };
            let target = cfg.types[rng.below(cfg.types.len())].name.clone();
            let kind = match i % 4 {
                0 if !gauges.is_empty() => FaultKind::VolumeFlood,
                2 if cfg.types.iter().any(|t| t.readout == Readout::Counts) => FaultKind::NovelTemplate,
                3 => FaultKind::Decoupling { data_type: target },
                _ => FaultKind::CounterSpike { data_type: target },
            };
            MultimodalFault {
                kind,
                timestamp: i * slot + jitter,
                duration,
                magnitude: rng.uniform_range(4.0, 8.0),
                n_dims: 3,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MultimodalData {
    pub names: Vec<String>,
    pub feature_names: Vec<Vec<String>>,
    pub data: Vec<Array2<f64>>,
    pub events: Vec<EventLabel>,
}

impl MultimodalData {
    pub fn n_records(&self) -> usize {
        self.data.first().map_or(0, |d| d.nrows())
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.names.iter().position(|n| n == name).map(|i| &self.data[i])
    }

    /// All types side by side, in type order.
    pub fn concatenated(&self) -> Array2<f64> {
        let views: Vec<_> = self.data.iter().map(|d| d.view()).collect();
        ndarray::concatenate(Axis(1), &views).expect("types share the record count")
    }
}

struct TypeModel {
    loadings: Array2<f64>,
    base: Array1<f64>,
    unit: Array1<f64>,
}

fn build_models(cfg: &MultimodalConfig) -> Vec<TypeModel> {
    let q = cfg.latent_dim();
    cfg.types
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let mut rng = SeededRng::substream(cfg.structure_seed, k as u64);
            let mut loadings = Array2::zeros((t.dims, q));
            for mut row in loadings.rows_mut() {
                row.mapv_inplace(|_| rng.standard_normal());
                let norm = row.dot(&row).sqrt().max(f64::MIN_POSITIVE);
                row /= norm;
            }
            let (base, unit) = match t.readout {
                Readout::Gauge => {
                    let base = Array1::from_shape_fn(t.dims, |_| rng.uniform_range(50.0, 500.0));
                    let unit = &base * 0.1;
                    (base, unit)
                }
                Readout::Counts => {
                    let mut rates = Array1::from_shape_fn(t.dims, |_| (rng.uniform_range(MIN_RATE.ln(), MAX_RATE.ln())).exp());
                    rates[t.dims - 1] = NEW_TEMPLATE_RATE;
                    loadings.row_mut(t.dims - 1).fill(0.0);
                    let unit = rates.mapv(|r| (COUNT_MODULATION * r).max(1.0));
                    (rates, unit)
                }
            };
            TypeModel { loadings, base, unit }
        })
        .collect()
}

fn shared_latent(rng: &mut SeededRng, t: usize, phase: f64, period: usize, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i == 0 {
                (2.0 * PI * t as f64 / period as f64 + phase).sin() + 0.5f64.sqrt() * rng.standard_normal()
            } else {
                rng.standard_normal()
            }
        })
        .collect()
}

/// Generates `n_records` time bins with the given faults injected.
pub fn gen_multimodal(
    cfg: &MultimodalConfig,
    n_records: usize,
    seed: u64,
    faults: &[MultimodalFault],
) -> Result<MultimodalData> {
    cfg.validate()?;
    if n_records == 0 {
        return Err(Error::InvalidInput("n_records must be positive".into()));
    }
    for f in faults {
        if let FaultKind::CounterSpike { data_type } | FaultKind::Decoupling { data_type } = &f.kind {
            if cfg.type_index(data_type).is_none() {
                return Err(Error::InvalidInput(format!("fault names unknown type '{data_type}'")));
            }
        }
    }
    let models = build_models(cfg);
    let ds = cfg.shared_latents;
    let dp = cfg.specific_latents;
    let mut data: Vec<Array2<f64>> = cfg.types.iter().map(|t| Array2::zeros((n_records, t.dims))).collect();

    for t in 0..n_records {
        let mut rng = SeededRng::substream(seed, t as u64);
        let z = shared_latent(&mut rng, t, 0.0, cfg.period, ds);
        for (k, layout) in cfg.types.iter().enumerate() {
            let decoupled = faults.iter().any(|f| {
                f.active(t) && matches!(&f.kind, FaultKind::Decoupling { data_type } if *data_type == layout.name)
            });
            let zk = if decoupled {
                let mut alt = SeededRng::substream(derive_seed(seed, t as u64), k as u64 + 1);
                shared_latent(&mut alt, t, PI, cfg.period, ds)
            } else {
                z.clone()
            };
            let c = layout.coupling;
            let s = (1.0 - c * c).sqrt();
            let mut v = Array1::zeros(ds + dp);
            for i in 0..ds {
                v[i] = c * zk[i];
            }
            for i in 0..dp {
                v[ds + i] = s * rng.standard_normal();
            }
            let m = &models[k];
            let signal = m.loadings.dot(&v);
            let mut row = data[k].row_mut(t);
            match layout.readout {
                Readout::Gauge => {
                    for j in 0..layout.dims {
                        let e = rng.standard_normal();
                        row[j] = m.base[j] + m.unit[j] * (signal[j] + cfg.noise_scale * layout.noise * e);
                    }
                }
                Readout::Counts => {
                    for j in 0..layout.dims {
                        let rate = m.base[j] * (1.0 + COUNT_MODULATION * signal[j]).max(0.0);
                        row[j] = if cfg.noise_scale > 0.0 { rng.poisson(rate) } else { rate };
                    }
                }
            }
        }
    }

    let mut events = Vec::with_capacity(faults.len());
    for (i, f) in faults.iter().enumerate() {
        let mut rng = SeededRng::substream(derive_seed(seed, u64::MAX), i as u64);
        let mut affected = Vec::new();
        let pick = |k: usize, rng: &mut SeededRng, affected: &mut Vec<AffectedDim>| {
            let layout = &cfg.types[k];
            let usable = match layout.readout {
                Readout::Gauge => layout.dims,
                Readout::Counts => layout.dims - 1,
            };
            for j in rng.sample_indices(usable, f.n_dims.min(usable)) {
                affected.push(AffectedDim {
                    data_type: layout.name.clone(),
                    dim: j,
                });
            }
        };
        match &f.kind {
            FaultKind::VolumeFlood => {
                for (k, t) in cfg.types.iter().enumerate() {
                    if t.readout == Readout::Gauge {
                        pick(k, &mut rng, &mut affected);
                    }
                }
            }
            FaultKind::CounterSpike { data_type } => {
                pick(cfg.type_index(data_type).expect("checked"), &mut rng, &mut affected);
            }
            FaultKind::NovelTemplate => {
                for t in cfg.types.iter().filter(|t| t.readout == Readout::Counts) {
                    affected.push(AffectedDim {
                        data_type: t.name.clone(),
                        dim: t.dims - 1,
                    });
                }
            }
            FaultKind::Decoupling { data_type } => {
                let k = cfg.type_index(data_type).expect("checked");
                affected.extend((0..cfg.types[k].dims).map(|dim| AffectedDim {
                    data_type: data_type.clone(),
                    dim,
                }));
            }
        }
        if !matches!(f.kind, FaultKind::Decoupling { .. }) {
            let end = (f.timestamp + f.duration).min(n_records);
            for a in &affected {
                let k = cfg.type_index(&a.data_type).expect("own type");
                let shift = match f.kind {
                    FaultKind::NovelTemplate => f.magnitude,
                    _ => f.magnitude * models[k].unit[a.dim],
                };
                for t in f.timestamp.min(end)..end {
                    data[k][[t, a.dim]] += shift;
                }
            }
        }
        affected.sort();
        events.push(EventLabel {
            timestamp: f.timestamp,
            duration: f.duration,
            tag: f.tag(),
            affected,
        });
    }

    Ok(MultimodalData {
        names: cfg.types.iter().map(|t| t.name.clone()).collect(),
        feature_names: cfg.types.iter().map(TypeLayout::feature_names).collect(),
        data,
        events,
    })
}
