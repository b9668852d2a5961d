//! Clinical feature encoding and the cascaded SVM classifier: a linear
//! hinge-loss SVM selects features, a kernel SVM makes the decision.

pub mod cv;
pub mod kernel;
pub mod linear;
pub mod pipeline;
pub mod schema;
pub mod smo;
pub mod standardize;


pub use cv::{crossval, inner_grid_search, stratified_folds, CrossValReport, FoldResult, GridSearchConfig};
pub use kernel::{default_gamma, kernel_registry, Kernel, KernelParams, LinearKernel, RbfKernel};
pub use linear::{primal_objective, select_features, LinearSvm, LinearSvmConfig};
pub use pipeline::{class_of_decision, ClinicalPipeline, PipelineConfig};
pub use schema::{normalize_key, ClinicalRecord, ClinicalSchema, FeatureKind, FeatureSpec, NUM_FEATURES};
pub use smo::{dual_objective, KernelSvm, KernelSvmConfig};
pub use standardize::Standardizer;
