//! Image, label-map and mask value types shared across the pipeline.
//!
//! All grids are stored slice-major: index `(s, y, x)` lives at
//! `(s * height + y) * width + x`. Spacing is carried per axis in millimetres,
//! in the same `(dz, dy, dx)` order as the axes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label codes used in files, networks and metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Label {
    Background = 0,
    LvCavity = 1,
    Myocardium = 2,
    Infarction = 3,
    NoReflow = 4,
}

impl Label {
    pub const ALL: [Label; 5] = [
        Label::Background,
        Label::LvCavity,
        Label::Myocardium,
        Label::Infarction,
        Label::NoReflow,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: i64) -> Result<Self> {
        match code {
            0 => Ok(Label::Background),
            1 => Ok(Label::LvCavity),
            2 => Ok(Label::Myocardium),
            3 => Ok(Label::Infarction),
            4 => Ok(Label::NoReflow),
            other => Err(Error::InvalidLabel(other)),
        }
    }

    /// Infarction and no-reflow.
    pub fn is_pathological(self) -> bool {
        matches!(self, Label::Infarction | Label::NoReflow)
    }
}

pub const MAX_LABEL: u8 = 4;

/// Case-level diagnosis. Signed coding for the SVMs: normal = -1, pathological = +1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseClass {
    Normal,
    Pathological,
}

impl CaseClass {
    pub fn sign(self) -> f64 {
        match self {
            CaseClass::Normal => -1.0,
            CaseClass::Pathological => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CaseClass::Normal => "normal",
            CaseClass::Pathological => "pathological",
        }
    }
}

impl std::fmt::Display for CaseClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CaseClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "n" | "-1" => Ok(CaseClass::Normal),
            "pathological" | "p" | "1" | "+1" => Ok(CaseClass::Pathological),
            other => Err(Error::InvalidValue(format!("unknown case class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub dz: f64,
    pub dy: f64,
    pub dx: f64,
}

impl Spacing {
    pub fn new(dz: f64, dy: f64, dx: f64) -> Result<Self> {
        let s = Spacing { dz, dy, dx };
        s.validate()?;
        Ok(s)
    }

    pub fn unit() -> Self {
        Spacing {
            dz: 1.0,
            dy: 1.0,
            dx: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        for (axis, v) in [("dz", self.dz), ("dy", self.dy), ("dx", self.dx)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidValue(format!(
                    "spacing {axis} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub slices: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub fn new(slices: usize, height: usize, width: usize) -> Result<Self> {
        if slices == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "dimensions must be >= 1, got ({slices}, {height}, {width})"
            )));
        }
        Ok(Dims {
            slices,
            height,
            width,
        })
    }

    pub fn len(&self) -> usize {
        self.slices * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice_len(&self) -> usize {
        self.height * self.width
    }

    pub fn index(&self, s: usize, y: usize, x: usize) -> usize {
        (s * self.height + y) * self.width + x
    }

    /// Inverse of [`Dims::index`].
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let x = idx % self.width;
        let rest = idx / self.width;
        (rest / self.height, rest % self.height, x)
    }
}

fn check_len(dims: Dims, len: usize) -> Result<()> {
    if dims.len() != len {
        return Err(Error::Shape(format!(
            "grid of {:?} needs {} voxels, got {}",
            dims,
            dims.len(),
            len
        )));
    }
    Ok(())
}

/// A stack of 2D intensity slices for one case.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    spacing: Spacing,
    data: Vec<f32>,
    case_id: String,
}

impl Volume {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<f32>, case_id: impl Into<String>) -> Result<Self> {
        check_len(dims, data.len())?;
        spacing.validate()?;
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite voxel value {bad}")));
        }
        Ok(Volume {
            dims,
            spacing,
            data,
            case_id: case_id.into(),
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn with_case_id(mut self, case_id: impl Into<String>) -> Self {
        self.case_id = case_id.into();
        self
    }

    pub fn slice(&self, s: usize) -> &[f32] {
        let n = self.dims.slice_len();
        &self.data[s * n..(s + 1) * n]
    }
}

/// Per-voxel label codes in `0..=4`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    dims: Dims,
    spacing: Spacing,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(dims: Dims, spacing: Spacing, labels: Vec<u8>) -> Result<Self> {
        check_len(dims, labels.len())?;
        spacing.validate()?;
        if let Some(&bad) = labels.iter().find(|&&l| l > MAX_LABEL) {
            return Err(Error::InvalidLabel(bad as i64));
        }
        Ok(LabelMap {
            dims,
            spacing,
            labels,
        })
    }

    pub fn zeros(dims: Dims, spacing: Spacing) -> Self {
        LabelMap {
            dims,
            spacing,
            labels: vec![0; dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u8> {
        self.labels
    }

    pub fn slice(&self, s: usize) -> &[u8] {
        let n = self.dims.slice_len();
        &self.labels[s * n..(s + 1) * n]
    }

    pub fn get(&self, s: usize, y: usize, x: usize) -> u8 {
        self.labels[self.dims.index(s, y, x)]
    }

    /// Selects the voxels whose label is in `labels`.
    pub fn extract_mask(&self, labels: &[u8]) -> Result<StructureMask> {
        let mut wanted = [false; MAX_LABEL as usize + 1];
        for &l in labels {
            if l > MAX_LABEL {
                return Err(Error::InvalidLabel(l as i64));
            }
            wanted[l as usize] = true;
        }
        Ok(StructureMask {
            dims: self.dims,
            spacing: self.spacing,
            bits: self.labels.iter().map(|&l| wanted[l as usize]).collect(),
        })
    }

    /// Voxel count per label present in the map.
    pub fn label_histogram(&self) -> BTreeMap<u8, usize> {
        let mut counts = [0usize; MAX_LABEL as usize + 1];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(l, &c)| (l as u8, c))
            .collect()
    }
}

/// Boolean selection over a label grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureMask {
    dims: Dims,
    spacing: Spacing,
    bits: Vec<bool>,
}

impl StructureMask {
    pub fn new(dims: Dims, spacing: Spacing, bits: Vec<bool>) -> Result<Self> {
        check_len(dims, bits.len())?;
        spacing.validate()?;
        Ok(StructureMask { dims, spacing, bits })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn and(&self, other: &StructureMask) -> Result<StructureMask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &StructureMask) -> Result<StructureMask> {
        self.zip_with(other, |a, b| a || b)
    }

    fn zip_with(&self, other: &StructureMask, f: impl Fn(bool, bool) -> bool) -> Result<StructureMask> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(StructureMask {
            dims: self.dims,
            spacing: self.spacing,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect(),
        })
    }
}
