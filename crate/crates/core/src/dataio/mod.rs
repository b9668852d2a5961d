//! File formats and dataset ingestion.

pub mod clinical;
pub mod dataset;
pub mod nifti;

pub use clinical::{parse_clinical_csv, parse_clinical_file, RawClinicalRecord};
pub use dataset::{load_dataset, split_dataset, CaseEntry, ClassPrefix, DatasetIndex, LayoutConfig};
pub use nifti::{read_label_map, read_volume, write_label_map, write_volume, NiftiHeader};
