//! Corpus-level descriptive statistics: per-sample size and shape rows,
//! empirical CDFs of each, and single-threshold comparisons between two
//! corpora.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::graph::Cfg;
use crate::metrics;

pub const NODE_COUNT: &str = "node_count";
pub const EDGE_COUNT: &str = "edge_count";
pub const AVG_CLOSENESS: &str = "avg_closeness";
pub const COMPONENT_COUNT: &str = "component_count";
pub const METRICS: [&str; 4] = [NODE_COUNT, EDGE_COUNT, AVG_CLOSENESS, COMPONENT_COUNT];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("cannot build a CDF from no values")]
    EmptyInput,
    #[error("non-finite value {0} in CDF input")]
    NonFinite(f64),
    #[error("corpus `{0}` has no samples")]
    EmptyCorpus(String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}

/// `(value, fraction of inputs <= value)` at each distinct value, in
/// increasing order. The last fraction is exactly 1.
pub fn empirical_cdf(values: &[f64]) -> Result<Vec<(f64, f64)>, ReportError> {
    if values.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(ReportError::NonFinite(bad));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let at_or_below = (i + 1) as f64 / n as f64;
        // -0.0 and 0.0 are one value
        match points.last_mut() {
            Some(last) if last.0 == v => last.1 = at_or_below,
            _ => points.push((v, at_or_below)),
        }
    }
    Ok(points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample_id: String,
    pub node_count: usize,
    pub edge_count: usize,
    /// Mean closeness over the largest weak component; 0 for one node.
    pub avg_closeness: f64,
    pub component_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_size: Option<u64>,
}

impl SampleRow {
    pub fn from_graph(g: &Cfg, file_size: Option<u64>) -> Self {
        Self::from_graph_with(g, file_size, Execution::Sequential)
    }

    pub fn from_graph_with(g: &Cfg, file_size: Option<u64>, exec: Execution) -> Self {
        let labeling = g.weak_components();
        let core = g.largest_component();
        let avg_closeness = metrics::closeness_with(&core, exec)
            .expect("largest component is connected")
            .summary()
            .mean;
        Self {
            sample_id: g.sample_id().to_string(),
            node_count: g.node_count(),
            edge_count: g.edge_count(),
            avg_closeness,
            component_count: labeling.component_count(),
            file_size,
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            NODE_COUNT => self.node_count as f64,
            EDGE_COUNT => self.edge_count as f64,
            AVG_CLOSENESS => self.avg_closeness,
            COMPONENT_COUNT => self.component_count as f64,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    #[serde(rename = "corpus")]
    pub corpus_name: String,
    pub samples: Vec<SampleRow>,
    pub cdfs: BTreeMap<String, Vec<(f64, f64)>>,
}

impl CorpusStats {
    /// Builds the CDFs for rows already computed.
    pub fn from_rows(name: &str, samples: Vec<SampleRow>) -> Result<Self, ReportError> {
        if samples.is_empty() {
            return Err(ReportError::EmptyCorpus(name.to_string()));
        }
        let mut cdfs = BTreeMap::new();
        for metric in METRICS {
            let values: Vec<f64> = samples
                .iter()
                .map(|s| s.metric(metric).expect("known metric"))
                .collect();
            cdfs.insert(metric.to_string(), empirical_cdf(&values)?);
        }
        Ok(Self {
            corpus_name: name.to_string(),
            samples,
            cdfs,
        })
    }

    pub fn metric_values(&self, name: &str) -> Result<Vec<f64>, ReportError> {
        self.samples
            .iter()
            .map(|s| {
                s.metric(name)
                    .ok_or_else(|| ReportError::UnknownMetric(name.to_string()))
            })
            .collect()
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("stats are serializable")
    }

    /// `corpus,metric,value,fraction` rows for external plotting.
    pub fn cdf_csv(&self) -> String {
        let mut out = String::from("corpus,metric,value,fraction\n");
        for (metric, points) in &self.cdfs {
            for (v, f) in points {
                out.push_str(&format!("{},{metric},{v},{f}\n", self.corpus_name));
            }
        }
        out
    }
}

pub fn corpus_stats(graphs: &[Cfg], name: &str) -> Result<CorpusStats, ReportError> {
    corpus_stats_with(graphs, name, Execution::default())
}

/// Per-sample rows in input order, then CDFs of each metric.
pub fn corpus_stats_with(
    graphs: &[Cfg],
    name: &str,
    exec: Execution,
) -> Result<CorpusStats, ReportError> {
    let rows = exec.map_slice(graphs, |g| SampleRow::from_graph_with(g, None, exec));
    CorpusStats::from_rows(name, rows)
}

/// Which corpus the threshold rule assigns to values below the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleOrientation {
    FirstBelow,
    SecondBelow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub first: String,
    pub second: String,
    pub metric: String,
    pub threshold: f64,
    /// Fraction of samples with value strictly below the threshold.
    pub first_below: f64,
    pub second_below: f64,
    pub orientation: RuleOrientation,
    /// Fraction of all samples the better-oriented rule labels correctly.
    pub rule_accuracy: f64,
}

pub fn compare(
    first: &CorpusStats,
    second: &CorpusStats,
    metric: &str,
    threshold: f64,
) -> Result<ComparisonSummary, ReportError> {
    let a = first.metric_values(metric)?;
    let b = second.metric_values(metric)?;
    let below = |vs: &[f64]| vs.iter().filter(|&&v| v < threshold).count();
    let (a_below, b_below) = (below(&a), below(&b));
    let total = (a.len() + b.len()) as f64;
    let first_rule = a_below + (b.len() - b_below);
    let second_rule = (a.len() - a_below) + b_below;
    let (orientation, correct) = if first_rule >= second_rule {
        (RuleOrientation::FirstBelow, first_rule)
    } else {
        (RuleOrientation::SecondBelow, second_rule)
    };
    Ok(ComparisonSummary {
        first: first.corpus_name.clone(),
        second: second.corpus_name.clone(),
        metric: metric.to_string(),
        threshold,
        first_below: a_below as f64 / a.len() as f64,
        second_below: b_below as f64 / b.len() as f64,
        orientation,
        rule_accuracy: correct as f64 / total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::BasicBlock;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(id: &str, n: u64, edges: &[(u64, u64)]) -> Cfg {
        Cfg::build(id, (0..n).map(BasicBlock::bare).collect(), edges).unwrap()
    }

    #[test]
    fn cdf_hand_values() {
        assert_eq!(
            empirical_cdf(&[1.0, 1.0, 2.0, 4.0]).unwrap(),
            vec![(1.0, 0.5), (2.0, 0.75), (4.0, 1.0)]
        );
        assert_eq!(empirical_cdf(&[7.0]).unwrap(), vec![(7.0, 1.0)]);
        assert_eq!(empirical_cdf(&[]).unwrap_err(), ReportError::EmptyInput);
        assert!(matches!(
            empirical_cdf(&[1.0, f64::NAN]).unwrap_err(),
            ReportError::NonFinite(_)
        ));
    }

    #[test]
    fn uniform_draws_track_true_cdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws: Vec<f64> = (0..1000).map(|_| rng.gen::<f64>()).collect();
        let cdf = empirical_cdf(&draws).unwrap();
        // sup distance, checked on both sides of each jump
        let mut prev = 0.0;
        let mut worst: f64 = 0.0;
        for &(v, f) in &cdf {
            worst = worst.max((f - v).abs()).max((prev - v).abs());
            prev = f;
        }
        assert!(worst < 0.06, "KS distance {worst}");
    }

    #[test]
    fn single_node_corpus() {
        let stats = corpus_stats(&[graph("one", 1, &[])], "c").unwrap();
        assert_eq!(stats.samples[0].avg_closeness, 0.0);
        assert_eq!(stats.cdfs[COMPONENT_COUNT], vec![(1.0, 1.0)]);
        assert_eq!(
            corpus_stats(&[], "empty").unwrap_err(),
            ReportError::EmptyCorpus("empty".into())
        );
    }

    #[test]
    fn component_cdf_over_mixed_corpus() {
        let path = graph("p", 3, &[(0, 1), (1, 2)]);
        let split = graph("s", 3, &[(0, 1)]);
        let stats = corpus_stats(&[path, split], "c").unwrap();
        assert_eq!(stats.cdfs[COMPONENT_COUNT], vec![(1.0, 0.5), (2.0, 1.0)]);
        assert!((stats.samples[0].avg_closeness - 7.0 / 9.0).abs() < 1e-15);
        assert_eq!(stats.samples[1].avg_closeness, 1.0);
        let json: serde_json::Value = serde_json::from_slice(&stats.to_json()).unwrap();
        assert_eq!(json["corpus"], "c");
        assert_eq!(json["cdfs"]["component_count"][1][1], 1.0);
        assert!(stats.cdf_csv().contains("c,component_count,2,1\n"));
    }

    fn stats_with(name: &str, closeness: &[f64]) -> CorpusStats {
        let rows = closeness
            .iter()
            .enumerate()
            .map(|(i, &c)| SampleRow {
                sample_id: format!("{name}{i}"),
                node_count: 3,
                edge_count: 2,
                avg_closeness: c,
                component_count: 1,
                file_size: None,
            })
            .collect();
        CorpusStats::from_rows(name, rows).unwrap()
    }

    #[test]
    fn separated_corpora() {
        let a = stats_with("a", &[0.1, 0.12, 0.15]);
        let b = stats_with("b", &[0.3, 0.4]);
        let c = compare(&a, &b, AVG_CLOSENESS, 0.2).unwrap();
        assert_eq!(c.rule_accuracy, 1.0);
        assert_eq!(c.orientation, RuleOrientation::FirstBelow);
        let flipped = compare(&b, &a, AVG_CLOSENESS, 0.2).unwrap();
        assert_eq!(flipped.rule_accuracy, 1.0);
        assert_eq!(flipped.orientation, RuleOrientation::SecondBelow);
        assert_eq!(
            compare(&a, &b, "weight", 0.2).unwrap_err(),
            ReportError::UnknownMetric("weight".into())
        );
    }

    #[test]
    fn identical_corpora_do_no_better_than_prior() {
        let a = stats_with("a", &[0.1, 0.25, 0.3, 0.18]);
        let b = stats_with("b", &[0.1, 0.25, 0.3, 0.18]);
        for t in [0.0, 0.15, 0.2, 0.5] {
            assert!(compare(&a, &b, AVG_CLOSENESS, t).unwrap().rule_accuracy <= 0.5);
        }
    }

    #[test]
    fn extreme_thresholds() {
        let a = stats_with("a", &[0.1, 0.9]);
        let b = stats_with("b", &[0.5]);
        let low = compare(&a, &b, AVG_CLOSENESS, f64::NEG_INFINITY).unwrap();
        assert_eq!((low.first_below, low.second_below), (0.0, 0.0));
        let high = compare(&a, &b, AVG_CLOSENESS, f64::INFINITY).unwrap();
        assert_eq!((high.first_below, high.second_below), (1.0, 1.0));
    }

    proptest! {
        #[test]
        fn cdfs_are_distribution_functions(values in proptest::collection::vec(-1e6f64..1e6, 1..300)) {
            let cdf = empirical_cdf(&values).unwrap();
            prop_assert_eq!(cdf.last().unwrap().1, 1.0);
            for w in cdf.windows(2) {
                prop_assert!(w[0].0 < w[1].0);
                prop_assert!(w[0].1 < w[1].1);
            }
            for &(v, f) in &cdf {
                let count = values.iter().filter(|&&x| x <= v).count();
                prop_assert_eq!(f, count as f64 / values.len() as f64);
            }
        }
    }
}
