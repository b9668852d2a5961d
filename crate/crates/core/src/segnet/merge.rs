use crate::error::{Error, Result};
use crate::segnet::model::ClassMap;
use crate::volcore::{Label, LabelMap};

/// Combines the anatomical prediction (0 bg, 1 cavity, 2 myocardium) with the
/// pathological one (0 bg, 1 normal myocardium, 2 infarction, 3 no-reflow).
///
/// Outside the anatomical myocardium the anatomical label is kept. Inside it
/// the voxel becomes infarction or no-reflow when the pathological network
/// says so, and myocardium otherwise, so pathology never leaves the
/// anatomical myocardium.
pub fn refine_and_merge(anat: &ClassMap, path: &ClassMap) -> Result<LabelMap> {
    if anat.dims() != path.dims() {
        return Err(Error::Shape(format!(
            "anatomical {:?} vs pathological {:?}",
            anat.dims(),
            path.dims()
        )));
    }
    let labels = anat
        .labels()
        .iter()
        .zip(path.labels())
        .map(|(&a, &p)| match (a, p) {
            (2, 2) => Label::Infarction.code(),
            (2, 3) => Label::NoReflow.code(),
            (2, _) => Label::Myocardium.code(),
            (other, _) => other,
        })
        .collect();
    LabelMap::new(anat.dims(), anat.spacing(), labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volcore::{Dims, Spacing};

    fn map(h: usize, w: usize, labels: Vec<u8>) -> LabelMap {
        LabelMap::new(Dims::new(1, h, w).unwrap(), Spacing::unit(), labels).unwrap()
    }

    #[test]
    fn rule_table_fixture() {
        let anat = map(2, 2, vec![2, 2, 1, 0]);
        let path = map(2, 2, vec![2, 0, 3, 2]);
        assert_eq!(refine_and_merge(&anat, &path).unwrap().labels(), &[3, 2, 1, 0]);
    }

    #[test]
    fn infarction_everywhere_is_clipped_to_ring() {
        let mut anat = vec![0u8; 25];
        for (i, l) in anat.iter_mut().enumerate() {
            let (y, x) = (i / 5, i % 5);
            let r2 = (y as i32 - 2).pow(2) + (x as i32 - 2).pow(2);
            *l = match r2 {
                0 => 1,
                1..=2 => 2,
                _ => 0,
            };
        }
        let out = refine_and_merge(&map(5, 5, anat.clone()), &map(5, 5, vec![2; 25])).unwrap();
        for (a, o) in anat.iter().zip(out.labels()) {
            assert_eq!(*o == 3, *a == 2);
        }
    }

    #[test]
    fn empty_pathology_keeps_anatomy() {
        let anat = map(1, 4, vec![0, 1, 2, 2]);
        let out = refine_and_merge(&anat, &map(1, 4, vec![0; 4])).unwrap();
        assert_eq!(out.labels(), anat.labels());
    }

    #[test]
    fn shape_mismatch() {
        assert!(refine_and_merge(&map(1, 4, vec![0; 4]), &map(2, 2, vec![0; 4])).is_err());
    }
}
