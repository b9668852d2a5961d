//! Standardizer, linear-SVM feature selection and kernel SVM as one fitted
//! unit.

use serde::{Deserialize, Serialize};

use crate::clinfeat::linear::{select_features, LinearSvm, LinearSvmConfig};
use crate::clinfeat::schema::ClinicalRecord;
use crate::clinfeat::smo::{KernelSvm, KernelSvmConfig};
use crate::clinfeat::standardize::Standardizer;
use crate::clinfeat::cv::{inner_grid_search, GridSearchConfig};
use crate::error::{Error, Result};
use crate::volcore::CaseClass;

pub const PIPELINE_FORMAT: &str = "mieval-clinical-pipeline";
pub const PIPELINE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub linear: LinearSvmConfig,
    /// Selection threshold relative to the largest linear weight.
    pub tau: f64,
    pub svm: KernelSvmConfig,
    pub grid_search: Option<GridSearchConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            linear: LinearSvmConfig::default(),
            tau: 0.1,
            svm: KernelSvmConfig::default(),
            grid_search: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::Config(format!("tau must be non-negative, got {}", self.tau)));
        }
        if !(self.linear.c > 0.0 && self.svm.c > 0.0) {
            return Err(Error::Config("SVM C values must be positive".into()));
        }
        if self.linear.epochs == 0 {
            return Err(Error::Config("linear SVM epochs must be at least 1".into()));
        }
        if !(self.svm.tolerance > 0.0) {
            return Err(Error::Config("SMO tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalPipeline {
    pub format: String,
    pub version: u32,
    pub feature_names: Vec<String>,
    pub standardizer: Standardizer,
    pub linear: LinearSvm,
    pub selected: Vec<usize>,
    pub svm: KernelSvm,
}

pub(crate) fn labels_of(records: &[&ClinicalRecord]) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            r.label
                .map(CaseClass::sign)
                .ok_or_else(|| Error::Training(format!("record `{}` has no class label", r.case_id)))
        })
        .collect()
}

pub(crate) fn project(x: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| x[i]).collect()
}

impl ClinicalPipeline {
    /// Fits every stage on `records` only.
    pub fn fit(records: &[&ClinicalRecord], feature_names: &[String], cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let y = labels_of(records)?;
        let rows: Vec<&[Option<f64>]> = records.iter().map(|r| r.features.as_slice()).collect();
        let standardizer = Standardizer::fit(&rows)?;
        let x: Vec<Vec<f64>> = rows.iter().map(|r| standardizer.transform(r)).collect::<Result<_>>()?;
        let linear = LinearSvm::train(&x, &y, &cfg.linear)?;
        let selected = select_features(&linear.w, cfg.tau);
        let xs: Vec<Vec<f64>> = x.iter().map(|r| project(r, &selected)).collect();
        let svm_cfg = match &cfg.grid_search {
            Some(grid) => inner_grid_search(&xs, &y, &cfg.svm, grid)?,
            None => cfg.svm.clone(),
        };
        let svm = KernelSvm::train(&xs, &y, &svm_cfg)?;
        Ok(ClinicalPipeline {
            format: PIPELINE_FORMAT.into(),
            version: PIPELINE_VERSION,
            feature_names: feature_names.to_vec(),
            standardizer,
            linear,
            selected,
            svm,
        })
    }

    /// Class and decision value; a zero decision value is pathological.
    pub fn predict(&self, record: &ClinicalRecord) -> Result<(CaseClass, f64)> {
        let x = self.standardizer.transform(&record.features)?;
        let f = self.svm.decision(&project(&x, &self.selected))?;
        Ok((class_of_decision(f), f))
    }

    pub fn selected_names(&self) -> Vec<String> {
        self.selected
            .iter()
            .map(|&i| self.feature_names.get(i).cloned().unwrap_or_else(|| format!("f{i}")))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: ClinicalPipeline = serde_json::from_str(text)?;
        if p.format != PIPELINE_FORMAT || p.version != PIPELINE_VERSION {
            return Err(Error::Checkpoint(format!("unsupported pipeline {} v{}", p.format, p.version)));
        }
        Ok(p)
    }
}

pub fn class_of_decision(f: f64) -> CaseClass {
    if f >= 0.0 {
        CaseClass::Pathological
    } else {
        CaseClass::Normal
    }
}
