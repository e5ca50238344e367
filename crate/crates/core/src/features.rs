//! The 23-dimensional per-sample feature vector and its CSV table form.
//!
//! Layout (frozen, see [`FEATURE_NAMES`]): five summary statistics (min,
//! max, mean, median, std) for each of betweenness, closeness and degree
//! centrality over the largest weak component, the same five for its
//! shortest-path lengths, then density, node count and edge count of the
//! whole graph.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::graph::Cfg;
use crate::metrics::{self, Summary};

pub const FEATURE_COUNT: usize = 23;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "betweenness_min",
    "betweenness_max",
    "betweenness_mean",
    "betweenness_median",
    "betweenness_std",
    "closeness_min",
    "closeness_max",
    "closeness_mean",
    "closeness_median",
    "closeness_std",
    "degree_min",
    "degree_max",
    "degree_mean",
    "degree_median",
    "degree_std",
    "shortest_path_min",
    "shortest_path_max",
    "shortest_path_mean",
    "shortest_path_median",
    "shortest_path_std",
    "density",
    "node_count",
    "edge_count",
];

pub const DENSITY: usize = 20;
pub const NODE_COUNT: usize = 21;
pub const EDGE_COUNT: usize = 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Malicious,
    Benign,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Malicious => "malicious",
            Label::Benign => "benign",
        }
    }

    pub fn is_malicious(self) -> bool {
        self == Label::Malicious
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "malicious" => Ok(Label::Malicious),
            "benign" => Ok(Label::Benign),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub sample_id: String,
    pub values: [f64; FEATURE_COUNT],
    pub label: Option<Label>,
}

impl FeatureVector {
    pub fn with_label(mut self, label: Option<Label>) -> Self {
        self.label = label;
        self
    }

    pub fn node_count(&self) -> f64 {
        self.values[NODE_COUNT]
    }

    pub fn edge_count(&self) -> f64 {
        self.values[EDGE_COUNT]
    }
}

pub fn extract_features(g: &Cfg) -> FeatureVector {
    extract_features_with(g, Execution::default())
}

pub fn extract_features_with(g: &Cfg, exec: Execution) -> FeatureVector {
    let core = g.largest_component();
    let connected = "largest component is connected";
    let between = metrics::betweenness_with(&core, exec).expect(connected);
    let close = metrics::closeness_with(&core, exec).expect(connected);
    let degree = metrics::degree_centrality(&core);
    let paths = metrics::shortest_path_stats_with(&core, exec).expect(connected);

    let mut values = [0.0; FEATURE_COUNT];
    let groups: [Summary; 4] = [between.summary(), close.summary(), degree.summary(), paths];
    for (i, group) in groups.iter().enumerate() {
        values[i * 5..i * 5 + 5].copy_from_slice(&group.to_array());
    }
    values[DENSITY] = metrics::density(g);
    values[NODE_COUNT] = g.node_count() as f64;
    values[EDGE_COUNT] = g.edge_count() as f64;
    FeatureVector {
        sample_id: g.sample_id().to_string(),
        values,
        label: None,
    }
}

/// Extracts every graph; output order follows input order.
pub fn extract_batch(graphs: &[Cfg], exec: Execution) -> Vec<FeatureVector> {
    exec.map_slice(graphs, |g| extract_features_with(g, exec))
}

#[derive(Debug, Error)]
pub enum FeatureTableError {
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    HeaderMismatch { expected: String, found: String },
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    BadValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: non-finite value `{value}`")]
    NonFinite {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: value {value} outside the feature's domain")]
    OutOfRange {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("row {row}: expected {expected} fields, found {found}")]
    FieldCount {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
}

pub fn table_header() -> Vec<&'static str> {
    std::iter::once("sample_id")
        .chain(FEATURE_NAMES)
        .chain(std::iter::once("label"))
        .collect()
}

/// Renders with 17 significant digits, enough to round-trip any f64.
fn render(value: f64) -> String {
    format!("{value:.16e}")
}

pub fn write_feature_table(rows: &[FeatureVector]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(table_header()).expect("in-memory write");
    for row in rows {
        let mut record = Vec::with_capacity(FEATURE_COUNT + 2);
        record.push(row.sample_id.clone());
        record.extend(row.values.iter().map(|&v| render(v)));
        record.push(
            row.label
                .map(|l| l.as_str().to_string())
                .unwrap_or_default(),
        );
        w.write_record(&record).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn in_domain(column: usize, value: f64) -> bool {
    match column {
        0..=14 | DENSITY => (0.0..=1.0).contains(&value),
        15..=19 => value >= 0.0,
        _ => value >= 0.0 && value.fract() == 0.0,
    }
}

pub fn parse_feature_table(bytes: &[u8]) -> Result<Vec<FeatureVector>, FeatureTableError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let expected = table_header();
    let found = r.headers()?.clone();
    if found.iter().ne(expected.iter().copied()) {
        return Err(FeatureTableError::HeaderMismatch {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() != expected.len() {
            return Err(FeatureTableError::FieldCount {
                row,
                expected: expected.len(),
                found: record.len(),
            });
        }
        let mut values = [0.0; FEATURE_COUNT];
        for (j, slot) in values.iter_mut().enumerate() {
            let raw = &record[j + 1];
            let column = FEATURE_NAMES[j].to_string();
            let value: f64 = raw
                .trim()
                .parse()
                .map_err(|_| FeatureTableError::BadValue {
                    row,
                    column: column.clone(),
                    value: raw.to_string(),
                })?;
            if !value.is_finite() {
                return Err(FeatureTableError::NonFinite {
                    row,
                    column,
                    value: raw.to_string(),
                });
            }
            if !in_domain(j, value) {
                return Err(FeatureTableError::OutOfRange { row, column, value });
            }
            *slot = value;
        }
        let label = match &record[FEATURE_COUNT + 1] {
            "" => None,
            s => Some(s.parse().map_err(|_| FeatureTableError::BadValue {
                row,
                column: "label".into(),
                value: s.to_string(),
            })?),
        };
        rows.push(FeatureVector {
            sample_id: record[0].to_string(),
            values,
            label,
        });
    }
    Ok(rows)
}
