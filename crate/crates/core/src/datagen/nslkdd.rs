//! NSL-KDD ingestion: symbolic columns one-hot encoded against a vocabulary
//! frozen from the training file.
//!
//! The column layout and the attack-to-class table come from a schema
//! descriptor (see `data/nslkdd_schema.toml`) rather than being hard-coded.
//! With the standard descriptor the three symbolic columns expand to 84
//! indicator columns and the encoded width is 122.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const STANDARD_SCHEMA: &str = include_str!("../../data/nslkdd_schema.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Symbolic,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficClass {
    Normal,
    Dos,
    Probing,
    R2l,
    U2r,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 5] = [
        TrafficClass::Normal,
        TrafficClass::Dos,
        TrafficClass::Probing,
        TrafficClass::R2l,
        TrafficClass::U2r,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrafficClass::Normal => "normal",
            TrafficClass::Dos => "dos",
            TrafficClass::Probing => "probing",
            TrafficClass::R2l => "r2l",
            TrafficClass::U2r => "u2r",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NslKddSchema {
    pub name: String,
    pub columns: Vec<ColumnSpec>,
    /// Class name to the raw label values belonging to it.
    pub classes: BTreeMap<String, Vec<String>>,
}

impl NslKddSchema {
    /// The descriptor shipped with the crate.
    pub fn standard() -> Self {
        Self::parse(STANDARD_SCHEMA).expect("bundled schema is valid")
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let schema: Self = toml::from_str(text).map_err(|e| Error::Config(format!("schema: {e}")))?;
        for class in schema.classes.keys() {
            if TrafficClass::from_name(class).is_none() {
                return Err(Error::Config(format!("schema names unknown class '{class}'")));
            }
        }
        Ok(schema)
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn discrete_columns(&self) -> usize {
        self.columns.iter().filter(|c| c.kind != ColumnKind::Continuous).count()
    }

    /// Maps a raw label (e.g. `neptune`, `normal.`) to its class.
    pub fn class_of(&self, raw: &str) -> Option<TrafficClass> {
        let tag = raw.trim().trim_end_matches('.');
        self.classes
            .iter()
            .find(|(_, members)| members.iter().any(|m| m == tag))
            .and_then(|(class, _)| TrafficClass::from_name(class))
    }
}

/// Sorted category list per symbolic column.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub columns: BTreeMap<String, Vec<String>>,
}

impl Vocabulary {
    pub fn encoded_width(&self, schema: &NslKddSchema) -> usize {
        schema
            .columns
            .iter()
            .map(|c| match c.kind {
                ColumnKind::Symbolic => self.columns.get(&c.name).map_or(0, Vec::len),
                _ => 1,
            })
            .sum()
    }

    pub fn feature_names(&self, schema: &NslKddSchema) -> Vec<String> {
        let mut names = Vec::new();
        for c in &schema.columns {
            match c.kind {
                ColumnKind::Symbolic => {
                    for value in self.columns.get(&c.name).into_iter().flatten() {
                        names.push(format!("{}_{}", c.name, value));
                    }
                }
                _ => names.push(c.name.clone()),
            }
        }
        names
    }
}

#[derive(Debug, Clone)]
pub struct NslKddData {
    pub vectors: Array2<f64>,
    pub labels: Vec<TrafficClass>,
    pub attack_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub vocabulary: Vocabulary,
}

impl NslKddData {
    pub fn rows_of(&self, class: TrafficClass) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == class)
            .map(|(i, _)| i)
            .collect()
    }
}

struct RawRow {
    fields: Vec<String>,
    class: TrafficClass,
    attack: String,
}

fn read_rows<R: Read>(reader: R, source: &Path, schema: &NslKddSchema) -> Result<Vec<RawRow>> {
    let n = schema.n_features();
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let data_err = |message: String| Error::Data {
            path: source.to_path_buf(),
            line,
            message,
        };
        if record.len() != n + 1 && record.len() != n + 2 {
            return Err(data_err(format!(
                "expected {} or {} fields, found {}",
                n + 1,
                n + 2,
                record.len()
            )));
        }
        let attack = record[n].trim_end_matches('.').to_string();
        let class = schema
            .class_of(&attack)
            .ok_or_else(|| data_err(format!("unknown class tag '{attack}'")))?;
        rows.push(RawRow {
            fields: record.iter().take(n).map(str::to_owned).collect(),
            class,
            attack,
        });
    }
    Ok(rows)
}

fn build_vocabulary(rows: &[RawRow], schema: &NslKddSchema) -> Vocabulary {
    let mut columns = BTreeMap::new();
    for (idx, col) in schema.columns.iter().enumerate() {
        if col.kind == ColumnKind::Symbolic {
            let values: BTreeSet<&str> = rows.iter().map(|r| r.fields[idx].as_str()).collect();
            columns.insert(col.name.clone(), values.into_iter().map(str::to_owned).collect());
        }
    }
    Vocabulary { columns }
}

/// Parses NSL-KDD records. Without a vocabulary one is built from these rows
/// (the training file); pass the training vocabulary when loading test data.
pub fn parse_nslkdd<R: Read>(
    reader: R,
    source: &Path,
    schema: &NslKddSchema,
    vocabulary: Option<&Vocabulary>,
) -> Result<NslKddData> {
    let rows = read_rows(reader, source, schema)?;
    let vocabulary = match vocabulary {
        Some(v) => v.clone(),
        None => build_vocabulary(&rows, schema),
    };
    let width = vocabulary.encoded_width(schema);
    let mut vectors = Array2::zeros((rows.len(), width));
    for (r, row) in rows.iter().enumerate() {
        let mut out = 0;
        for (idx, col) in schema.columns.iter().enumerate() {
            let raw = &row.fields[idx];
            match col.kind {
                ColumnKind::Symbolic => {
                    let vocab = vocabulary.columns.get(&col.name).map(Vec::as_slice).unwrap_or(&[]);
                    if let Ok(pos) = vocab.binary_search(raw) {
                        vectors[[r, out + pos]] = 1.0;
                    }
                    out += vocab.len();
                }
                ColumnKind::Continuous | ColumnKind::Binary => {
                    vectors[[r, out]] = raw.parse::<f64>().map_err(|_| Error::Data {
                        path: source.to_path_buf(),
                        line: r + 1,
                        message: format!("column '{}' is not numeric: '{raw}'", col.name),
                    })?;
                    out += 1;
                }
            }
        }
    }
    Ok(NslKddData {
        vectors,
        labels: rows.iter().map(|r| r.class).collect(),
        attack_names: rows.into_iter().map(|r| r.attack).collect(),
        feature_names: vocabulary.feature_names(schema),
        vocabulary,
    })
}

pub fn load_nslkdd(path: &Path, schema: &NslKddSchema, vocabulary: Option<&Vocabulary>) -> Result<NslKddData> {
    let file = std::fs::File::open(path).map_err(|e| Error::Data {
        path: PathBuf::from(path),
        line: 0,
        message: e.to_string(),
    })?;
    parse_nslkdd(std::io::BufReader::new(file), path, schema, vocabulary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(protocol: &str, service: &str, flag: &str, class: &str) -> String {
        let mut fields: Vec<String> = (0..41).map(|i| format!("{}", i % 3)).collect();
        fields[1] = protocol.into();
        fields[2] = service.into();
        fields[3] = flag.into();
        fields.push(class.into());
        fields.push("20".into());
        fields.join(",")
    }

    fn parse(text: &str, vocab: Option<&Vocabulary>) -> Result<NslKddData> {
        parse_nslkdd(text.as_bytes(), Path::new("mem.csv"), &NslKddSchema::standard(), vocab)
    }

    #[test]
    fn standard_schema_shape() {
        let s = NslKddSchema::standard();
        assert_eq!(s.n_features(), 41);
        assert_eq!(s.discrete_columns(), 9);
        assert_eq!(s.class_of("neptune"), Some(TrafficClass::Dos));
        assert_eq!(s.class_of("normal."), Some(TrafficClass::Normal));
        assert_eq!(s.class_of("rootkit"), Some(TrafficClass::U2r));
        assert_eq!(s.class_of("nonsense"), None);
    }

    #[test]
    fn one_hot_blocks_and_unseen_categories() {
        let train = [
            row("tcp", "http", "SF", "normal"),
            row("udp", "pop_3", "REJ", "normal"),
            row("icmp", "http", "SF", "normal"),
        ]
        .join("\n");
        let tr = parse(&train, None).unwrap();
        // 38 pass-through columns + 3 protocols + 2 services + 2 flags
        assert_eq!(tr.vectors.ncols(), 38 + 3 + 2 + 2);
        assert!(tr.feature_names.contains(&"service_pop_3".to_string()));
        let svc: Vec<usize> = tr
            .feature_names
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with("service_"))
            .map(|(i, _)| i)
            .collect();
        for r in 0..3 {
            let ones: f64 = svc.iter().map(|&c| tr.vectors[[r, c]]).sum();
            assert_eq!(ones, 1.0);
        }
        let test = row("tcp", "gopher", "SF", "neptune");
        let te = parse(&test, Some(&tr.vocabulary)).unwrap();
        assert_eq!(te.vectors.ncols(), tr.vectors.ncols());
        assert!(svc.iter().all(|&c| te.vectors[[0, c]] == 0.0));
        assert_eq!(te.labels, vec![TrafficClass::Dos]);
    }

    #[test]
    fn wrong_arity_reports_line() {
        let text = format!("{}\n1,2,3\n", row("tcp", "http", "SF", "normal"));
        match parse(&text, None) {
            Err(Error::Data { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("fields"));
            }
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_class_rejected() {
        let text = row("tcp", "http", "SF", "martian");
        assert!(matches!(parse(&text, None), Err(Error::Data { line: 1, .. })));
    }

    #[test]
    fn difficulty_column_optional() {
        let mut r = row("tcp", "http", "SF", "smurf");
        r.truncate(r.rfind(',').unwrap());
        let d = parse(&r, None).unwrap();
        assert_eq!(d.labels, vec![TrafficClass::Dos]);
        assert_eq!(d.attack_names, vec!["smurf".to_string()]);
    }

    #[test]
    fn full_vocabulary_reaches_122() {
        let protocols = ["icmp", "tcp", "udp"];
        let flags = ["OTH", "REJ", "RSTO", "RSTOS0", "RSTR", "S0", "S1", "S2", "S3", "SF", "SH"];
        let rows: Vec<String> = (0..70)
            .map(|i| row(protocols[i % 3], &format!("svc{i:02}"), flags[i % 11], "normal"))
            .collect();
        let d = parse(&rows.join("\n"), None).unwrap();
        assert_eq!(d.vectors.ncols(), 122);
    }
}
