use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{accuracy, Metric, StructureDef};
use crate::volcore::{CaseClass, LabelMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureScores {
    pub structure: String,
    /// Metric name to value; `None` marks an undefined value.
    pub scores: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case_id: String,
    pub structures: Vec<StructureScores>,
    pub predicted_class: Option<CaseClass>,
    pub truth_class: Option<CaseClass>,
}

/// Scores every structure of `pred` against `truth` with each metric.
pub fn evaluate_case(
    case_id: &str,
    pred: &LabelMap,
    truth: &LabelMap,
    structures: &[StructureDef],
    metrics: &[Box<dyn Metric>],
) -> Result<CaseReport> {
    if pred.dims() != truth.dims() {
        return Err(Error::Shape(format!(
            "case `{case_id}`: prediction {:?} vs ground truth {:?}",
            pred.dims(),
            truth.dims()
        )));
    }
    let structures = structures
        .iter()
        .map(|s| {
            let p = pred.extract_mask(&s.labels)?;
            let t = truth.extract_mask(&s.labels)?;
            let scores = metrics
                .iter()
                .map(|m| Ok((m.name().to_string(), m.evaluate(&p, &t)?)))
                .collect::<Result<_>>()?;
            Ok(StructureScores {
                structure: s.name.clone(),
                scores,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CaseReport {
        case_id: case_id.to_string(),
        structures,
        predicted_class: None,
        truth_class: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdKind {
    /// Divides by `n − 1`; a single value has std 0.
    #[default]
    Sample,
    Population,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub n: usize,
    pub n_missing: usize,
}

impl MetricSummary {
    pub fn from_values(values: &[Option<f64>], kind: StdKind) -> Self {
        let present: Vec<f64> = values.iter().flatten().copied().collect();
        let n = present.len();
        let n_missing = values.len() - n;
        if n == 0 {
            return MetricSummary {
                mean: None,
                std: None,
                min: None,
                max: None,
                n,
                n_missing,
            };
        }
        let mean = present.iter().sum::<f64>() / n as f64;
        let ss: f64 = present.iter().map(|v| (v - mean).powi(2)).sum();
        let std = match (kind, n) {
            (StdKind::Sample, 1) => 0.0,
            (StdKind::Sample, _) => (ss / (n - 1) as f64).sqrt(),
            (StdKind::Population, _) => (ss / n as f64).sqrt(),
        };
        MetricSummary {
            mean: Some(mean),
            std: Some(std),
            min: present.iter().copied().reduce(f64::min),
            max: present.iter().copied().reduce(f64::max),
            n,
            n_missing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSummary {
    pub structure: String,
    pub metrics: BTreeMap<String, MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub n_cases: usize,
    pub structures: Vec<StructureSummary>,
    /// Over cases carrying both a predicted and a true class.
    pub accuracy: Option<f64>,
    pub n_classified: usize,
}

/// Per structure and metric statistics over the non-missing values.
pub fn summarize(reports: &[CaseReport], kind: StdKind) -> Result<SummaryReport> {
    if reports.is_empty() {
        return Err(Error::InvalidValue("no case reports to summarize".into()));
    }
    let mut order: Vec<String> = Vec::new();
    let mut values: BTreeMap<(String, String), Vec<Option<f64>>> = BTreeMap::new();
    for r in reports {
        for s in &r.structures {
            if !order.contains(&s.structure) {
                order.push(s.structure.clone());
            }
            for (m, v) in &s.scores {
                values.entry((s.structure.clone(), m.clone())).or_default().push(*v);
            }
        }
    }
    let structures = order
        .into_iter()
        .map(|name| StructureSummary {
            metrics: values
                .iter()
                .filter(|((s, _), _)| *s == name)
                .map(|((_, m), v)| (m.clone(), MetricSummary::from_values(v, kind)))
                .collect(),
            structure: name,
        })
        .collect();
    let (preds, truths): (Vec<CaseClass>, Vec<CaseClass>) = reports
        .iter()
        .filter_map(|r| Some((r.predicted_class?, r.truth_class?)))
        .unzip();
    Ok(SummaryReport {
        n_cases: reports.len(),
        structures,
        accuracy: if preds.is_empty() { None } else { Some(accuracy(&preds, &truths)?) },
        n_classified: preds.len(),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn class_cell(c: Option<CaseClass>) -> String {
    c.map(|c| c.as_str().to_string()).unwrap_or_default()
}

/// One row per case and structure; empty cells are missing values.
pub fn reports_to_csv(reports: &[CaseReport]) -> Result<String> {
    let mut metrics: Vec<String> = Vec::new();
    for r in reports {
        for s in &r.structures {
            for m in s.scores.keys() {
                if !metrics.contains(m) {
                    metrics.push(m.clone());
                }
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["case_id".to_string(), "structure".to_string()];
    header.extend(metrics.iter().cloned());
    header.extend(["predicted_class".to_string(), "truth_class".to_string()]);
    w.write_record(&header)?;
    for r in reports {
        for s in &r.structures {
            let mut row = vec![r.case_id.clone(), s.structure.clone()];
            row.extend(metrics.iter().map(|m| cell(s.scores.get(m).copied().flatten())));
            row.push(class_cell(r.predicted_class));
            row.push(class_cell(r.truth_class));
            w.write_record(&row)?;
        }
    }
    finish(w)
}

/// One row per structure and metric with mean, std, min, max, n, n_missing.
pub fn summary_to_csv(summary: &SummaryReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["structure", "metric", "mean", "std", "min", "max", "n", "n_missing"])?;
    for s in &summary.structures {
        for (m, v) in &s.metrics {
            w.write_record([
                s.structure.clone(),
                m.clone(),
                cell(v.mean),
                cell(v.std),
                cell(v.min),
                cell(v.max),
                v.n.to_string(),
                v.n_missing.to_string(),
            ])?;
        }
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::InvalidValue(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 cells"))
}
