//! Dataset access shared by the commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use mieval::clinfeat::ClinicalRecord;
use mieval::dataio::{load_dataset, read_label_map, CaseEntry, DatasetIndex};
use mieval::preproc::{preprocess_volume, resize_labels_to};
use mieval::segnet::TrainCase;
use mieval::LabelMap;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub fn load_index(cfg: &RunConfig) -> CliResult<DatasetIndex> {
    let root = cfg.dataset_root()?;
    let idx = load_dataset(root, &cfg.dataset.layout)?;
    if idx.is_empty() {
        return Err(CliError::Data(format!("no cases found under {}", root.display())));
    }
    Ok(idx)
}

/// Image and labels on the network grid.
pub fn training_case(entry: &CaseEntry, cfg: &RunConfig) -> CliResult<TrainCase> {
    let labels = entry
        .load_labels()?
        .ok_or_else(|| CliError::Data(format!("case `{}` has no label file", entry.case_id)))?;
    let image = preprocess_volume(&entry.load_image()?, &cfg.preproc)?;
    let labels = resize_labels_to(&labels, cfg.preproc.target_h, cfg.preproc.target_w)?;
    Ok(TrainCase::new(image, labels)?)
}

/// Encoded clinical records. With `labeled_only`, cases without a class
/// prefix are skipped; every kept case must have a clinical record.
pub fn clinical_records(idx: &DatasetIndex, cfg: &RunConfig, labeled_only: bool) -> CliResult<Vec<ClinicalRecord>> {
    let schema = &cfg.clinical.schema;
    let mut records = Vec::new();
    let mut missing = Vec::new();
    for entry in &idx.cases {
        if labeled_only && entry.class.is_none() {
            continue;
        }
        match entry.load_clinical()? {
            Some(raw) => records.push(schema.encode(&entry.case_id, &raw, entry.class)?),
            None => missing.push(entry.case_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(CliError::Data(format!("no clinical record for case(s): {}", missing.join(", "))));
    }
    if records.is_empty() {
        return Err(CliError::Data("no clinical records found".into()));
    }
    Ok(records)
}

/// Label maps in `dir` keyed by case id (`<case>.nii.gz` or `<case>.nii`).
pub fn prediction_files(dir: &Path) -> CliResult<BTreeMap<String, std::path::PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let stem = name.strip_suffix(".nii.gz").or_else(|| name.strip_suffix(".nii"));
        if let Some(case) = stem {
            if out.insert(case.to_string(), path.clone()).is_some() {
                return Err(CliError::Data(format!("case `{case}` has more than one prediction file")));
            }
        }
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> CliResult<LabelMap> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(read_label_map(&bytes).map_err(mieval::Error::from)?)
}
