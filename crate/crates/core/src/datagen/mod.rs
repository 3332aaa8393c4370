//! Data supply: the correlated-component simulator, the NSL-KDD loader and a
//! synthetic cross-domain (flow / MIB / syslog) stream generator.
//!
//! Every generator is a pure function of its config and seed. Datasets are
//! exchanged as CSV with a header row of feature names; ground truth lives in
//! sidecar files and never in the feature tables.

mod multimodal;
mod nslkdd;
mod sim;

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use multimodal::{
    gen_multimodal, random_faults, FaultKind, MultimodalConfig, MultimodalData, MultimodalFault, Readout, TypeLayout,
};
pub use nslkdd::{
    load_nslkdd, parse_nslkdd, ColumnKind, ColumnSpec, NslKddData, NslKddSchema, TrafficClass, Vocabulary,
};
pub use sim::{gen_simulated, inject_fault, FaultDirection, FaultSpec, SimConfig, SimLayout};

/// One ground-truth dimension: which data type, and the index inside it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AffectedDim {
    pub data_type: String,
    pub dim: usize,
}

/// Ground truth for one injected fault.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLabel {
    pub timestamp: usize,
    pub duration: usize,
    pub tag: String,
    pub affected: Vec<AffectedDim>,
}

impl EventLabel {
    pub fn empty(timestamp: usize, tag: &str) -> Self {
        Self {
            timestamp,
            duration: 0,
            tag: tag.to_string(),
            affected: Vec::new(),
        }
    }

    pub fn dims(&self) -> BTreeSet<usize> {
        self.affected.iter().map(|a| a.dim).collect()
    }

    pub fn dims_of(&self, data_type: &str) -> BTreeSet<usize> {
        self.affected
            .iter()
            .filter(|a| a.data_type == data_type)
            .map(|a| a.dim)
            .collect()
    }

    pub fn types(&self) -> BTreeSet<&str> {
        self.affected.iter().map(|a| a.data_type.as_str()).collect()
    }

    /// Whether bin `t` lies in `[timestamp, timestamp + duration)`.
    pub fn covers(&self, t: usize) -> bool {
        t >= self.timestamp && t < self.timestamp + self.duration.max(1)
    }
}

#[derive(Serialize, Deserialize)]
struct EventRow {
    timestamp: usize,
    duration: usize,
    #[serde(rename = "type")]
    types: String,
    tag: String,
    affected: String,
}

pub fn write_events_csv(path: &Path, events: &[EventLabel]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in events {
        w.serialize(EventRow {
            timestamp: e.timestamp,
            duration: e.duration,
            types: e.types().into_iter().collect::<Vec<_>>().join(";"),
            tag: e.tag.clone(),
            affected: e
                .affected
                .iter()
                .map(|a| format!("{}:{}", a.data_type, a.dim))
                .collect::<Vec<_>>()
                .join(";"),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events_csv(path: &Path) -> Result<Vec<EventLabel>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| open_error(path, e))?;
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<EventRow>().enumerate() {
        let row = row?;
        let mut affected = Vec::new();
        for item in row.affected.split(';').filter(|s| !s.is_empty()) {
            let parsed = item
                .rsplit_once(':')
                .and_then(|(t, d)| d.parse().ok().map(|dim| AffectedDim { data_type: t.into(), dim }));
            affected.push(parsed.ok_or_else(|| Error::Data {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("bad affected entry '{item}'"),
            })?);
        }
        out.push(EventLabel {
            timestamp: row.timestamp,
            duration: row.duration,
            tag: row.tag,
            affected,
        });
    }
    Ok(out)
}

/// Writes a feature table with a header row.
pub fn write_matrix_csv(path: &Path, names: &[String], data: &Array2<f64>) -> Result<()> {
    if names.len() != data.ncols() {
        return Err(Error::DimensionMismatch {
            expected: data.ncols(),
            got: names.len(),
        });
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(names)?;
    for row in data.rows() {
        // `{:?}` prints the shortest decimal that parses back to the same bits.
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn open_error(path: &Path, e: csv::Error) -> Error {
    Error::Data {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    }
}

/// Reads a feature table written by [`write_matrix_csv`] (or any headered
/// numeric CSV). Returns the header and the data.
pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| open_error(path, e))?;
    let names: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for record in r.records() {
        let record = record.map_err(|e| Error::Data {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != names.len() {
            return Err(Error::Data {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} fields, found {}", names.len(), record.len()),
            });
        }
        for field in record.iter() {
            values.push(field.parse::<f64>().map_err(|_| Error::Data {
                path: path.to_path_buf(),
                line,
                message: format!("not a number: '{field}'"),
            })?);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptyData(format!("{} has no records", path.display())));
    }
    let data = Array2::from_shape_vec((rows, names.len()), values).expect("shape checked per row");
    Ok((names, data))
}
