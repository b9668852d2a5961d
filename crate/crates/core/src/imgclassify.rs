//! Case-level normal/pathological decisions: the slice-count rule on a
//! merged segmentation, and the common interface shared with the clinical
//! pipeline.

use serde::{Deserialize, Serialize};

use crate::clinfeat::{ClinicalPipeline, ClinicalRecord};
use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::volcore::{CaseClass, Label, LabelMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliceRuleConfig {
    pub min_pathological_slices: usize,
    pub min_pixels_per_slice: usize,
}

impl Default for SliceRuleConfig {
    fn default() -> Self {
        SliceRuleConfig {
            min_pathological_slices: 2,
            min_pixels_per_slice: 1,
        }
    }
}

impl SliceRuleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_pathological_slices == 0 || self.min_pixels_per_slice == 0 {
            return Err(Error::Config("slice rule thresholds must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceRuleDecision {
    pub class: CaseClass,
    /// Slices holding enough infarction or no-reflow voxels.
    pub counted_slices: Vec<usize>,
}

/// A slice counts when it has at least `min_pixels_per_slice` voxels labeled
/// infarction or no-reflow; the case is pathological when at least
/// `min_pathological_slices` slices count.
pub fn classify_from_segmentation(lm: &LabelMap, cfg: &SliceRuleConfig) -> SliceRuleDecision {
    let counted_slices: Vec<usize> = (0..lm.dims().slices)
        .filter(|&s| {
            let n = lm
                .slice(s)
                .iter()
                .filter(|&&l| Label::from_code(i64::from(l)).is_ok_and(Label::is_pathological))
                .count();
            n >= cfg.min_pixels_per_slice
        })
        .collect();
    let class = if counted_slices.len() >= cfg.min_pathological_slices {
        CaseClass::Pathological
    } else {
        CaseClass::Normal
    };
    SliceRuleDecision { class, counted_slices }
}

/// What a classifier may look at for one case.
#[derive(Debug, Clone, Default)]
pub struct CaseInputs<'a> {
    pub case_id: &'a str,
    pub clinical: Option<&'a ClinicalRecord>,
    pub segmentation: Option<&'a LabelMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseDecision {
    pub class: CaseClass,
    /// SVM decision value, or the counted-slice number for the image rule.
    pub score: f64,
}

pub trait CaseClassifier: Send + Sync {
    fn name(&self) -> &'static str;
    fn classify(&self, inputs: &CaseInputs<'_>) -> Result<CaseDecision>;
}

pub struct ClinicalClassifier {
    pub pipeline: Option<ClinicalPipeline>,
}

impl CaseClassifier for ClinicalClassifier {
    fn name(&self) -> &'static str {
        "clinical"
    }

    fn classify(&self, inputs: &CaseInputs<'_>) -> Result<CaseDecision> {
        let pipeline = self
            .pipeline
            .as_ref()
            .ok_or_else(|| Error::NotFitted("clinical pipeline has not been fitted".into()))?;
        let record = inputs
            .clinical
            .ok_or_else(|| Error::Ingest(format!("case `{}` has no clinical record", inputs.case_id)))?;
        let (class, score) = pipeline.predict(record)?;
        Ok(CaseDecision { class, score })
    }
}

pub struct ImageClassifier {
    pub rule: SliceRuleConfig,
}

impl CaseClassifier for ImageClassifier {
    fn name(&self) -> &'static str {
        "image"
    }

    fn classify(&self, inputs: &CaseInputs<'_>) -> Result<CaseDecision> {
        let lm = inputs
            .segmentation
            .ok_or_else(|| Error::Ingest(format!("case `{}` has no segmentation", inputs.case_id)))?;
        let d = classify_from_segmentation(lm, &self.rule);
        Ok(CaseDecision {
            class: d.class,
            score: d.counted_slices.len() as f64,
        })
    }
}

/// Shared state the classifier factories draw from.
#[derive(Debug, Clone, Default)]
pub struct ClassifierContext {
    pub pipeline: Option<ClinicalPipeline>,
    pub slice_rule: SliceRuleConfig,
}

pub fn classifier_registry() -> Registry<dyn CaseClassifier, ClassifierContext> {
    let mut r: Registry<dyn CaseClassifier, ClassifierContext> = Registry::new("case classifier");
    r.register("clinical", |c: &ClassifierContext| {
        Box::new(ClinicalClassifier {
            pipeline: c.pipeline.clone(),
        })
    })
    .expect("fresh registry");
    r.register("image", |c: &ClassifierContext| Box::new(ImageClassifier { rule: c.slice_rule }))
        .expect("fresh registry");
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volcore::{Dims, Spacing};

    /// 7 slices of 2x2; `path` lists (slice, code) voxels set at pixel 0.
    fn stack(slices: usize, path: &[(usize, u8)]) -> LabelMap {
        let d = Dims::new(slices, 2, 2).unwrap();
        let mut labels = vec![2u8; d.len()];
        for &(s, c) in path {
            labels[s * 4] = c;
        }
        LabelMap::new(d, Spacing::unit(), labels).unwrap()
    }

    #[test]
    fn examples() {
        let cfg = SliceRuleConfig::default();
        assert_eq!(classify_from_segmentation(&stack(7, &[]), &cfg).class, CaseClass::Normal);
        let two = classify_from_segmentation(&stack(7, &[(1, 3), (5, 4)]), &cfg);
        assert_eq!(two.class, CaseClass::Pathological);
        assert_eq!(two.counted_slices, vec![1, 5]);
        assert_eq!(classify_from_segmentation(&stack(7, &[(3, 3)]), &cfg).class, CaseClass::Normal);
        let strict = SliceRuleConfig {
            min_pixels_per_slice: 2,
            ..cfg
        };
        assert_eq!(classify_from_segmentation(&stack(7, &[(3, 3)]), &strict).class, CaseClass::Normal);
        let any = SliceRuleConfig {
            min_pathological_slices: 1,
            ..cfg
        };
        assert_eq!(classify_from_segmentation(&stack(7, &[(3, 4)]), &any).class, CaseClass::Pathological);
    }

    #[test]
    fn validation() {
        assert!(SliceRuleConfig::default().validate().is_ok());
        assert!(SliceRuleConfig {
            min_pathological_slices: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn registry_and_unfitted_clinical() {
        let r = classifier_registry();
        assert_eq!(r.names(), ["clinical", "image"]);
        let ctx = ClassifierContext::default();
        let clinical = r.create("clinical", &ctx).unwrap();
        let rec = ClinicalRecord::new("x", vec![Some(0.0); 11], None);
        let inputs = CaseInputs {
            case_id: "x",
            clinical: Some(&rec),
            segmentation: None,
        };
        assert!(matches!(clinical.classify(&inputs), Err(Error::NotFitted(_))));
        let image = r.create("image", &ctx).unwrap();
        assert!(image.classify(&inputs).is_err());
        let lm = stack(4, &[(0, 3), (2, 3)]);
        let with_seg = CaseInputs {
            segmentation: Some(&lm),
            ..inputs
        };
        let d = image.classify(&with_seg).unwrap();
        assert_eq!((d.class, d.score), (CaseClass::Pathological, 2.0));
    }
}
