//! Case inventory for a directory tree with one sub-folder per case.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::clinical::{parse_clinical_csv, parse_clinical_file, RawClinicalRecord};
use crate::dataio::nifti;
use crate::error::{Error, Result};
use crate::volcore::{CaseClass, LabelMap, Volume};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPrefix {
    pub prefix: String,
    pub class: CaseClass,
}

/// Where files live inside a case folder. `{case}` expands to the folder
/// name; the first existing candidate wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutConfig {
    pub image_patterns: Vec<String>,
    pub label_patterns: Vec<String>,
    pub clinical_patterns: Vec<String>,
    /// Optional single CSV (relative to the dataset root) with one row per case.
    pub clinical_csv: Option<String>,
    pub class_prefixes: Vec<ClassPrefix>,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            image_patterns: vec!["Images/{case}.nii.gz".into(), "Images/{case}.nii".into()],
            label_patterns: vec!["Contours/{case}.nii.gz".into(), "Contours/{case}.nii".into()],
            clinical_patterns: vec!["{case}.txt".into(), "../{case}.txt".into()],
            clinical_csv: None,
            class_prefixes: vec![
                ClassPrefix {
                    prefix: "Case_P".into(),
                    class: CaseClass::Pathological,
                },
                ClassPrefix {
                    prefix: "Case_N".into(),
                    class: CaseClass::Normal,
                },
            ],
        }
    }
}

impl LayoutConfig {
    /// Longest matching prefix wins.
    pub fn class_of(&self, case_id: &str) -> Option<CaseClass> {
        self.class_prefixes
            .iter()
            .filter(|p| case_id.starts_with(&p.prefix))
            .max_by_key(|p| p.prefix.len())
            .map(|p| p.class)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub case_id: String,
    pub image: PathBuf,
    pub label: Option<PathBuf>,
    pub clinical: Option<PathBuf>,
    /// Record taken from the dataset-level CSV, when one is configured.
    #[serde(skip)]
    pub clinical_row: Option<RawClinicalRecord>,
    pub class: Option<CaseClass>,
}

impl CaseEntry {
    pub fn load_image(&self) -> Result<Volume> {
        let bytes = fs::read(&self.image).map_err(|e| Error::io(&self.image, e))?;
        Ok(nifti::read_volume(&bytes, &self.case_id)?)
    }

    pub fn load_labels(&self) -> Result<Option<LabelMap>> {
        let Some(path) = &self.label else {
            return Ok(None);
        };
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Some(nifti::read_label_map(&bytes)?))
    }

    pub fn load_clinical(&self) -> Result<Option<RawClinicalRecord>> {
        if let Some(row) = &self.clinical_row {
            return Ok(Some(row.clone()));
        }
        let Some(path) = &self.clinical else {
            return Ok(None);
        };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_clinical_file(&text).map(Some)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetIndex {
    pub cases: Vec<CaseEntry>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn get(&self, case_id: &str) -> Option<&CaseEntry> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.cases.iter().map(|c| c.case_id.as_str()).collect()
    }

    pub fn count_class(&self, class: CaseClass) -> usize {
        self.cases.iter().filter(|c| c.class == Some(class)).count()
    }
}

fn resolve(case_dir: &Path, case_id: &str, patterns: &[String]) -> Option<PathBuf> {
    patterns
        .iter()
        .map(|p| case_dir.join(p.replace("{case}", case_id)))
        .find(|p| p.is_file())
}

pub fn load_dataset(root: &Path, layout: &LayoutConfig) -> Result<DatasetIndex> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut csv_rows: HashMap<String, RawClinicalRecord> = HashMap::new();
    if let Some(csv_rel) = &layout.clinical_csv {
        let path = root.join(csv_rel);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        for (id, rec) in parse_clinical_csv(&text)? {
            if csv_rows.insert(id.clone(), rec).is_some() {
                return Err(Error::Ingest(format!("case `{id}` appears twice in {}", path.display())));
            }
        }
    }
    let mut cases = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let case_id = entry.file_name().to_string_lossy().into_owned();
        if case_id.starts_with('.') {
            continue;
        }
        let image = resolve(&path, &case_id, &layout.image_patterns).ok_or_else(|| {
            Error::Ingest(format!(
                "case `{case_id}`: no image file matching {:?}",
                layout.image_patterns
            ))
        })?;
        cases.push(CaseEntry {
            label: resolve(&path, &case_id, &layout.label_patterns),
            clinical: resolve(&path, &case_id, &layout.clinical_patterns),
            clinical_row: csv_rows.remove(&case_id),
            class: layout.class_of(&case_id),
            image,
            case_id,
        });
    }
    cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    Ok(DatasetIndex { cases })
}

/// Seeded per-class draw of a validation set with fixed composition.
pub fn split_dataset(
    idx: &DatasetIndex,
    n_val: usize,
    val_pathological: usize,
    val_normal: usize,
    seed: u64,
) -> Result<(DatasetIndex, DatasetIndex)> {
    if n_val != val_pathological + val_normal {
        return Err(Error::Split(format!(
            "n_val = {n_val} but requested {val_pathological} pathological + {val_normal} normal"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_val = vec![false; idx.len()];
    for (class, want) in [(CaseClass::Pathological, val_pathological), (CaseClass::Normal, val_normal)] {
        let mut members: Vec<usize> = (0..idx.len()).filter(|&i| idx.cases[i].class == Some(class)).collect();
        if members.len() < want {
            return Err(Error::Split(format!(
                "requested {want} {class} validation cases but only {} available",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for &i in &members[..want] {
            in_val[i] = true;
        }
    }
    let (mut train, mut val) = (DatasetIndex::default(), DatasetIndex::default());
    for (case, v) in idx.cases.iter().zip(in_val) {
        if v {
            val.cases.push(case.clone());
        } else {
            train.cases.push(case.clone());
        }
    }
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, class: CaseClass) -> CaseEntry {
        CaseEntry {
            case_id: id.into(),
            image: PathBuf::from(format!("{id}.nii")),
            label: None,
            clinical: None,
            clinical_row: None,
            class: Some(class),
        }
    }

    fn reference_sized_index() -> DatasetIndex {
        let mut cases: Vec<CaseEntry> = (0..67).map(|i| entry(&format!("Case_P{i:03}"), CaseClass::Pathological)).collect();
        cases.extend((0..33).map(|i| entry(&format!("Case_N{i:03}"), CaseClass::Normal)));
        cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        DatasetIndex { cases }
    }

    #[test]
    fn eighty_five_fifteen() {
        let idx = reference_sized_index();
        let (train, val) = split_dataset(&idx, 15, 10, 5, 7).unwrap();
        assert_eq!((train.len(), val.len()), (85, 15));
        assert_eq!(val.count_class(CaseClass::Pathological), 10);
        assert_eq!(val.count_class(CaseClass::Normal), 5);
        let mut all: Vec<&str> = train.ids().into_iter().chain(val.ids()).collect();
        all.sort();
        assert_eq!(all, idx.ids());
    }

    #[test]
    fn split_is_seeded() {
        let idx = reference_sized_index();
        let a = split_dataset(&idx, 15, 10, 5, 3).unwrap();
        let b = split_dataset(&idx, 15, 10, 5, 3).unwrap();
        let c = split_dataset(&idx, 15, 10, 5, 4).unwrap();
        assert_eq!(a.1.ids(), b.1.ids());
        assert_ne!(a.1.ids(), c.1.ids());
    }

    #[test]
    fn insufficient_class() {
        let idx = DatasetIndex {
            cases: (0..4).map(|i| entry(&format!("Case_N{i}"), CaseClass::Normal)).collect(),
        };
        assert!(matches!(split_dataset(&idx, 5, 0, 5, 0), Err(Error::Split(_))));
        assert!(matches!(split_dataset(&idx, 3, 0, 2, 0), Err(Error::Split(_))));
    }

    #[test]
    fn prefix_rules() {
        let layout = LayoutConfig {
            class_prefixes: vec![
                ClassPrefix { prefix: "C".into(), class: CaseClass::Normal },
                ClassPrefix { prefix: "CP".into(), class: CaseClass::Pathological },
            ],
            ..LayoutConfig::default()
        };
        assert_eq!(layout.class_of("CP01"), Some(CaseClass::Pathological));
        assert_eq!(layout.class_of("C01"), Some(CaseClass::Normal));
        assert_eq!(layout.class_of("X01"), None);
    }
}
