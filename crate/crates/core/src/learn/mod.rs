//! Malware-vs-benign classifiers, stratified cross-validation, and the
//! confusion-matrix rate set used to report them.
//!
//! Three learners are implemented from scratch: L2-regularized logistic
//! regression trained by full-batch gradient descent, a linear SVM trained
//! with Pegasos stochastic subgradient steps, and a bagged random forest
//! of Gini trees. The positive class is [`Label::Malicious`]; ties always
//! resolve to [`Label::Benign`].

mod cv;
mod eval;
mod forest;
mod linear;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::features::{FeatureVector, Label};

pub use cv::{cross_validate, cross_validate_with, stratified_kfold, CvOutcome, Fold};
pub use eval::{compute_metrics, render_table, ConfusionMatrix, MetricReport, TableRow};
pub use forest::{Forest, Tree, TreeNode};
pub use linear::{logreg_objective, LinearModel, LogisticFit, Standardizer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample `{sample_id}` has no label")]
    Unlabeled { sample_id: String },
    #[error("row {row} has {found} features, expected {expected}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row} contains a non-finite feature value")]
    NonFinite { row: usize },
    #[error("training data contains only {0} samples")]
    SingleClass(Label),
    #[error("class {label} has {count} samples, fewer than the {k} folds requested")]
    ClassTooSmall {
        label: Label,
        count: usize,
        k: usize,
    },
    #[error("model expects {expected} features, input has {found}")]
    SchemaMismatch { expected: usize, found: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("confusion matrix is all zero")]
    AllZeroMatrix,
    #[error("confusion matrix cell {cell} is negative or not finite")]
    InvalidCount { cell: &'static str },
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed model file: {0}")]
    ModelFile(String),
}

/// Labeled design matrix. Rows share one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    rows: Vec<Vec<f64>>,
    labels: Vec<Label>,
}

impl LabeledDataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self, LearnError> {
        assert_eq!(rows.len(), labels.len(), "one label per row");
        let Some(first) = rows.first() else {
            return Err(LearnError::EmptyDataset);
        };
        let expected = first.len();
        for (row, values) in rows.iter().enumerate() {
            if values.len() != expected {
                return Err(LearnError::DimensionMismatch {
                    row,
                    expected,
                    found: values.len(),
                });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(LearnError::NonFinite { row });
            }
        }
        Ok(Self { rows, labels })
    }

    /// Every vector must carry a label.
    pub fn from_vectors(vectors: &[FeatureVector]) -> Result<Self, LearnError> {
        let labels = vectors
            .iter()
            .map(|v| {
                v.label.ok_or_else(|| LearnError::Unlabeled {
                    sample_id: v.sample_id.clone(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(vectors.iter().map(|v| v.values.to_vec()).collect(), labels)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// `(malicious, benign)` counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let mal = self.labels.iter().filter(|l| l.is_malicious()).count();
        (mal, self.labels.len() - mal)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    fn require_both_classes(&self) -> Result<(), LearnError> {
        match self.class_counts() {
            (0, _) => Err(LearnError::SingleClass(Label::Benign)),
            (_, 0) => Err(LearnError::SingleClass(Label::Malicious)),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logreg,
    Svm,
    Rf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Logreg, ModelKind::Svm, ModelKind::Rf];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Logreg => "logreg",
            ModelKind::Svm => "svm",
            ModelKind::Rf => "rf",
        }
    }

    /// Short row label used in metric tables.
    pub fn table_name(self) -> &'static str {
        match self {
            ModelKind::Logreg => "LR",
            ModelKind::Svm => "SVM",
            ModelKind::Rf => "RF",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logreg" => Ok(ModelKind::Logreg),
            "svm" => Ok(ModelKind::Svm),
            "rf" => Ok(ModelKind::Rf),
            other => Err(format!(
                "unknown classifier `{other}` (expected logreg, svm or rf)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            l2: 1e-4,
            epochs: 500,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub lambda: f64,
    /// Minimum number of Pegasos steps; training always runs whole
    /// shuffled passes over the data, at least `passes` of them.
    pub min_steps: usize,
    pub passes: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            min_steps: 2000,
            passes: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub min_leaf: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 100,
            min_leaf: 1,
            max_depth: None,
            max_features: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub logreg: LogRegParams,
    pub svm: SvmParams,
    pub forest: ForestParams,
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |msg: &str| Err(LearnError::InvalidHyper(msg.to_string()));
        let lr = &self.logreg;
        if !(lr.learning_rate > 0.0 && lr.learning_rate.is_finite()) {
            return bad("logreg learning rate must be positive");
        }
        if !(lr.l2 >= 0.0 && lr.l2.is_finite()) {
            return bad("logreg l2 must be non-negative");
        }
        if !(self.svm.lambda > 0.0 && self.svm.lambda.is_finite()) {
            return bad("svm lambda must be positive");
        }
        if self.svm.passes == 0 {
            return bad("svm passes must be at least 1");
        }
        if self.forest.trees == 0 {
            return bad("forest needs at least one tree");
        }
        if self.forest.min_leaf == 0 {
            return bad("forest min-leaf must be at least 1");
        }
        if self.forest.max_features == Some(0) {
            return bad("forest max-features must be at least 1");
        }
        Ok(())
    }
}

/// A trained classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelParams {
    Logreg(LinearModel),
    Svm(LinearModel),
    Rf(Forest),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Logreg(_) => ModelKind::Logreg,
            ModelParams::Svm(_) => ModelKind::Svm,
            ModelParams::Rf(_) => ModelKind::Rf,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelParams::Logreg(m) | ModelParams::Svm(m) => m.dim(),
            ModelParams::Rf(f) => f.dim(),
        }
    }

    /// Prediction for a raw row of the training dimension.
    pub fn predict_row(&self, row: &[f64]) -> Label {
        debug_assert_eq!(row.len(), self.dim());
        let malicious = match self {
            ModelParams::Logreg(m) | ModelParams::Svm(m) => m.decision(row) > 0.0,
            ModelParams::Rf(f) => f.malicious_probability(row) > 0.5,
        };
        if malicious {
            Label::Malicious
        } else {
            Label::Benign
        }
    }
}

pub fn predict(model: &ModelParams, x: &FeatureVector) -> Result<Label, LearnError> {
    if model.dim() != x.values.len() {
        return Err(LearnError::SchemaMismatch {
            expected: model.dim(),
            found: x.values.len(),
        });
    }
    Ok(model.predict_row(&x.values))
}

pub fn train(
    kind: ModelKind,
    data: &LabeledDataset,
    hyper: &HyperParams,
    seed: u64,
) -> Result<ModelParams, LearnError> {
    train_with(kind, data, hyper, seed, Execution::default())
}

/// Deterministic in `(data order, hyper, seed)`; `exec` only changes how
/// forest trees are scheduled, never the result.
pub fn train_with(
    kind: ModelKind,
    data: &LabeledDataset,
    hyper: &HyperParams,
    seed: u64,
    exec: Execution,
) -> Result<ModelParams, LearnError> {
    hyper.validate()?;
    data.require_both_classes()?;
    Ok(match kind {
        ModelKind::Logreg => ModelParams::Logreg(linear::fit_logreg(data, &hyper.logreg).model),
        ModelKind::Svm => ModelParams::Svm(linear::fit_svm(data, &hyper.svm, seed)),
        ModelKind::Rf => ModelParams::Rf(forest::fit_forest(data, &hyper.forest, seed, exec)),
    })
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: ModelParams,
}

pub fn model_to_json(model: &ModelParams) -> Vec<u8> {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    };
    let mut out = serde_json::to_vec_pretty(&file).expect("model is serializable");
    out.push(b'\n');
    out
}

pub fn model_from_json(bytes: &[u8]) -> Result<ModelParams, LearnError> {
    #[derive(Deserialize)]
    struct Version {
        format_version: u32,
    }
    let version: Version =
        serde_json::from_slice(bytes).map_err(|e| LearnError::ModelFile(e.to_string()))?;
    if version.format_version != MODEL_FORMAT_VERSION {
        return Err(LearnError::UnsupportedVersion(version.format_version));
    }
    let file: ModelFile =
        serde_json::from_slice(bytes).map_err(|e| LearnError::ModelFile(e.to_string()))?;
    Ok(file.model)
}
