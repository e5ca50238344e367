use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    compute_metrics, train_with, ConfusionMatrix, HyperParams, LabeledDataset, LearnError,
    MetricReport, ModelKind,
};
use crate::exec::Execution;
use crate::features::Label;

/// Sorted train and test row indices of one fold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified `k`-fold split.
///
/// Each class's indices are shuffled, then all of them (malicious first)
/// are dealt round-robin into the folds with one running counter, so
/// per-class fold sizes differ by at most one and so do total sizes.
pub fn stratified_kfold(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Fold>, LearnError> {
    if k < 2 {
        return Err(LearnError::InvalidHyper(format!(
            "k must be at least 2, got {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    let mut dealt = 0;
    for class in [Label::Malicious, Label::Benign] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(LearnError::ClassTooSmall {
                label: class,
                count: members.len(),
                k,
            });
        }
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = dealt % k;
            dealt += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train) = (0..labels.len()).partition(|&i| assignment[i] == f);
            Fold { train, test }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub kind: ModelKind,
    pub k: usize,
    pub seed: u64,
    /// Summed counts divided by `k`.
    pub averaged: ConfusionMatrix,
    pub summed: ConfusionMatrix,
    /// Rates from the summed counts.
    pub report: MetricReport,
    pub per_fold: Vec<ConfusionMatrix>,
}

pub fn cross_validate(
    kind: ModelKind,
    data: &LabeledDataset,
    hyper: &HyperParams,
    k: usize,
    seed: u64,
) -> Result<CvOutcome, LearnError> {
    cross_validate_with(kind, data, hyper, k, seed, Execution::default())
}

/// Trains on `k - 1` folds and tests on the held-out one, for every fold.
/// Fold `f` trains with seed `seed + f`.
pub fn cross_validate_with(
    kind: ModelKind,
    data: &LabeledDataset,
    hyper: &HyperParams,
    k: usize,
    seed: u64,
    exec: Execution,
) -> Result<CvOutcome, LearnError> {
    hyper.validate()?;
    data.require_both_classes()?;
    let folds = stratified_kfold(data.labels(), k, seed)?;
    let results = exec.map_range(folds.len(), |f| {
        let fold = &folds[f];
        let train = data.subset(&fold.train);
        let model = train_with(kind, &train, hyper, seed.wrapping_add(f as u64), exec)?;
        let mut m = ConfusionMatrix::default();
        for &i in &fold.test {
            m.record(data.labels()[i], model.predict_row(&data.rows()[i]));
        }
        Ok(m)
    });
    let per_fold = results
        .into_iter()
        .collect::<Result<Vec<_>, LearnError>>()?;
    let mut summed = ConfusionMatrix::default();
    for m in &per_fold {
        summed.add(m);
    }
    let report = compute_metrics(&summed)?;
    Ok(CvOutcome {
        kind,
        k,
        seed,
        averaged: summed.scaled(1.0 / k as f64),
        summed,
        report,
        per_fold,
    })
}
