use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::features::Label;

/// Binary confusion counts with malicious as the positive class. Cells
/// are reals so fold-averaged matrices are representable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub fp: f64,
    pub tn: f64,
}

impl ConfusionMatrix {
    pub fn new(tp: f64, fn_: f64, fp: f64, tn: f64) -> Result<Self, LearnError> {
        for (cell, v) in [("tp", tp), ("fn", fn_), ("fp", fp), ("tn", tn)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LearnError::InvalidCount { cell });
            }
        }
        Ok(Self { tp, fn_, fp, tn })
    }

    pub fn record(&mut self, actual: Label, predicted: Label) {
        match (actual, predicted) {
            (Label::Malicious, Label::Malicious) => self.tp += 1.0,
            (Label::Malicious, Label::Benign) => self.fn_ += 1.0,
            (Label::Benign, Label::Malicious) => self.fp += 1.0,
            (Label::Benign, Label::Benign) => self.tn += 1.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fn_ += other.fn_;
        self.fp += other.fp;
        self.tn += other.tn;
    }

    pub fn scaled(&self, factor: f64) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tp * factor,
            fn_: self.fn_ * factor,
            fp: self.fp * factor,
            tn: self.tn * factor,
        }
    }
}

/// The six rates in percent. A rate whose denominator is zero is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
    pub fdr: Option<f64>,
    #[serde(rename = "for")]
    pub for_: Option<f64>,
    pub f1: Option<f64>,
    pub ar: Option<f64>,
}

impl MetricReport {
    pub const COLUMNS: [&'static str; 6] = ["FNR", "FPR", "FDR", "FOR", "F1", "AR"];

    pub fn values(&self) -> [Option<f64>; 6] {
        [self.fnr, self.fpr, self.fdr, self.for_, self.f1, self.ar]
    }
}

fn percent(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| 100.0 * num / den)
}

pub fn compute_metrics(m: &ConfusionMatrix) -> Result<MetricReport, LearnError> {
    let m = ConfusionMatrix::new(m.tp, m.fn_, m.fp, m.tn)?;
    if m.total() == 0.0 {
        return Err(LearnError::AllZeroMatrix);
    }
    let ConfusionMatrix { tp, fn_, fp, tn } = m;
    Ok(MetricReport {
        fnr: percent(fn_, fn_ + tp),
        fpr: percent(fp, fp + tn),
        fdr: percent(fp, fp + tp),
        for_: percent(fn_, fn_ + tn),
        f1: percent(2.0 * tp, 2.0 * tp + fn_ + fp),
        ar: percent(tp + tn, m.total()),
    })
}

/// One classifier's line in a results table.
pub struct TableRow<'a> {
    pub method: &'a str,
    pub matrix: &'a ConfusionMatrix,
    pub report: &'a MetricReport,
}

/// Fixed-width text table: the matrix as two lines (actual malicious,
/// actual benign) against predicted malicious/benign, with the rates on
/// the first line. Cells print to one decimal.
pub fn render_table(rows: &[TableRow<'_>]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));
    let mut out = String::new();
    let _ = write!(out, "{:<8}{:>8}{:>8}", "Method", "P:mal", "P:ben");
    for c in MetricReport::COLUMNS {
        let _ = write!(out, "{c:>8}");
    }
    out.push('\n');
    for row in rows {
        let m = row.matrix;
        let _ = write!(out, "{:<8}{:>8.1}{:>8.1}", row.method, m.tp, m.fn_);
        for v in row.report.values() {
            let _ = write!(out, "{:>8}", cell(v));
        }
        out.push('\n');
        let _ = writeln!(out, "{:<8}{:>8.1}{:>8.1}", "", m.fp, m.tn);
    }
    out
}
