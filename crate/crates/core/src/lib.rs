//! Myocardial infarction evaluation from delayed-enhancement cardiac MRI.
//!
//! The crate covers the whole pipeline: NIfTI and clinical-file ingestion,
//! per-case preprocessing, a small reverse-mode differentiation engine with
//! the layers needed by the two encoder-decoder segmentation networks,
//! anatomical masking of the pathological segmentation, a cascaded
//! linear/RBF SVM for clinical classification, the slice-count image rule,
//! and 3D Dice / Hausdorff / relative-volume metrics.

pub mod clinfeat;
pub mod dataio;
pub mod error;
pub mod imgclassify;
pub mod metrics;
pub mod nn;
pub mod preproc;
pub mod registry;
pub mod segnet;
pub mod synth;
pub mod volcore;

pub use error::{Error, NiftiError, Result};
pub use volcore::{CaseClass, Dims, Label, LabelMap, Spacing, StructureMask, Volume};
