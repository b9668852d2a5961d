//! Stratified k-fold cross-validation and the optional inner grid search.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clinfeat::kernel::default_gamma;
use crate::clinfeat::pipeline::{class_of_decision, labels_of, ClinicalPipeline, PipelineConfig};
use crate::clinfeat::schema::ClinicalRecord;
use crate::clinfeat::smo::{KernelSvm, KernelSvmConfig};
use crate::error::{Error, Result};
use crate::volcore::CaseClass;

/// Folds of indices. Each class is shuffled with `seed` and dealt
/// round-robin, continuing across classes, so fold sizes differ by at most
/// one and every fold holds each class within one member of its share.
pub fn stratified_folds(labels: &[f64], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [-1.0, 1.0] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

fn class_counts(labels: &[f64]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&v| v > 0.0).count();
    (labels.len() - pos, pos)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSearchConfig {
    pub c_values: Vec<f64>,
    /// Multipliers of the default kernel width.
    pub gamma_factors: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for GridSearchConfig {
    fn default() -> Self {
        GridSearchConfig {
            c_values: vec![0.1, 1.0, 10.0],
            gamma_factors: vec![0.01, 0.1, 1.0],
            folds: 3,
            seed: 0,
        }
    }
}

/// Picks `(C, γ)` by inner cross-validated accuracy on already selected,
/// standardized features. Ties keep the earlier grid cell. Falls back to
/// `base` when a class has fewer members than inner folds.
pub fn inner_grid_search(x: &[Vec<f64>], y: &[f64], base: &KernelSvmConfig, grid: &GridSearchConfig) -> Result<KernelSvmConfig> {
    let (neg, pos) = class_counts(y);
    if neg < grid.folds || pos < grid.folds || grid.c_values.is_empty() || grid.gamma_factors.is_empty() {
        return Ok(base.clone());
    }
    let folds = stratified_folds(y, grid.folds, grid.seed)?;
    let heuristic = default_gamma(x);
    let mut best: Option<(f64, KernelSvmConfig)> = None;
    for &c in &grid.c_values {
        for &factor in &grid.gamma_factors {
            let cfg = KernelSvmConfig {
                c,
                gamma: Some(factor * heuristic),
                ..base.clone()
            };
            let mut correct = 0usize;
            for test in &folds {
                let train: Vec<usize> = (0..y.len()).filter(|i| !test.contains(i)).collect();
                let xt: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
                let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
                let m = KernelSvm::train(&xt, &yt, &cfg)?;
                for &i in test {
                    if class_of_decision(m.decision(&x[i])?).sign() == y[i] {
                        correct += 1;
                    }
                }
            }
            let acc = correct as f64 / y.len() as f64;
            if best.as_ref().map_or(true, |(b, _)| acc > *b) {
                best = Some((acc, cfg));
            }
        }
    }
    Ok(best.expect("non-empty grid").1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub test_indices: Vec<usize>,
    pub accuracy: f64,
    pub predictions: Vec<(String, CaseClass, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    pub seed: u64,
    #[serde(skip)]
    pub models: Vec<ClinicalPipeline>,
}

/// Stratified k-fold evaluation; every fitted statistic comes from the
/// training folds only.
pub fn crossval(
    records: &[ClinicalRecord],
    feature_names: &[String],
    cfg: &PipelineConfig,
    k: usize,
    seed: u64,
) -> Result<CrossValReport> {
    let refs: Vec<&ClinicalRecord> = records.iter().collect();
    let y = labels_of(&refs)?;
    let (neg, pos) = class_counts(&y);
    if neg < k || pos < k {
        return Err(Error::Training(format!(
            "{k}-fold cross-validation needs at least {k} records per class, got {neg} normal and {pos} pathological"
        )));
    }
    let folds = stratified_folds(&y, k, seed)?;
    let mut results = Vec::with_capacity(k);
    let mut models = Vec::with_capacity(k);
    for test in folds {
        let train: Vec<&ClinicalRecord> = (0..records.len()).filter(|i| !test.contains(i)).map(|i| &records[i]).collect();
        let model = ClinicalPipeline::fit(&train, feature_names, cfg)?;
        let mut correct = 0;
        let mut predictions = Vec::with_capacity(test.len());
        for &i in &test {
            let (class, f) = model.predict(&records[i])?;
            if Some(class) == records[i].label {
                correct += 1;
            }
            predictions.push((records[i].case_id.clone(), class, f));
        }
        results.push(FoldResult {
            accuracy: correct as f64 / test.len() as f64,
            test_indices: test,
            predictions,
        });
        models.push(model);
    }
    let mean_accuracy = results.iter().map(|f| f.accuracy).sum::<f64>() / k as f64;
    Ok(CrossValReport {
        folds: results,
        mean_accuracy,
        seed,
        models,
    })
}
