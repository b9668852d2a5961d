//! Run configuration: one TOML document whose defaults mirror the reference
//! training and evaluation settings.

use std::fs;
use std::path::{Path, PathBuf};

use mieval::clinfeat::{kernel_registry, ClinicalSchema, KernelParams, PipelineConfig};
use mieval::dataio::LayoutConfig;
use mieval::imgclassify::SliceRuleConfig;
use mieval::metrics::{create_metrics, default_structures, StdKind, StructureDef, DEFAULT_METRICS};
use mieval::nn::loss_registry;
use mieval::preproc::PreprocConfig;
use mieval::segnet::{SegRole, TrainConfig, UNetSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{at, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; copied into every seeded component.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub preproc: PreprocConfig,
    pub anatomical: NetConfig,
    pub pathological: NetConfig,
    pub train: TrainConfig,
    pub clinical: ClinicalConfig,
    pub slice_rule: SliceRuleConfig,
    pub evaluate: EvaluateConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("runs"),
            dataset: DatasetConfig::default(),
            preproc: PreprocConfig::default(),
            anatomical: NetConfig::default(),
            pathological: NetConfig::default(),
            train: TrainConfig::default(),
            clinical: ClinicalConfig::default(),
            slice_rule: SliceRuleConfig::default(),
            evaluate: EvaluateConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub root: Option<PathBuf>,
    pub layout: LayoutConfig,
    pub split: SplitConfig,
}

/// Validation cases held out of segmentation training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub n_val: usize,
    pub val_pathological: usize,
    pub val_normal: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            n_val: 15,
            val_pathological: 10,
            val_normal: 5,
        }
    }
}

/// Network shape; the class count follows the role and the input size
/// follows `preproc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub in_channels: usize,
    pub base_features: usize,
    pub depth: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        let s = UNetSpec::default();
        NetConfig {
            in_channels: s.in_channels,
            base_features: s.base_features,
            depth: s.depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClinicalConfig {
    pub schema: ClinicalSchema,
    pub pipeline: PipelineConfig,
    pub folds: usize,
}

impl Default for ClinicalConfig {
    fn default() -> Self {
        ClinicalConfig {
            schema: ClinicalSchema::default(),
            pipeline: PipelineConfig::default(),
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub structures: Vec<StructureDef>,
    pub metrics: Vec<String>,
    pub std: StdKind,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            structures: default_structures(),
            metrics: DEFAULT_METRICS.iter().map(|s| s.to_string()).collect(),
            std: StdKind::Sample,
        }
    }
}

/// Inputs produced by earlier commands. Unset entries default to the
/// locations those commands write under `output_dir`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub anatomical_checkpoint: Option<PathBuf>,
    pub pathological_checkpoint: Option<PathBuf>,
    pub predictions_dir: Option<PathBuf>,
    pub clinical_pipeline: Option<PathBuf>,
}

impl RunConfig {
    /// Parses TOML, reporting the field path of the first bad value.
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = match e.path().to_string() {
                p if p == "." => "<document>".to_string(),
                p => p,
            };
            CliError::config(field, e.inner().message().trim())
        })
    }

    /// Reads `path` and makes relative paths relative to its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let anchor = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(root) = cfg.dataset.root.as_mut() {
            anchor(root);
        }
        anchor(&mut cfg.output_dir);
        for p in [
            &mut cfg.paths.anatomical_checkpoint,
            &mut cfg.paths.pathological_checkpoint,
            &mut cfg.paths.predictions_dir,
            &mut cfg.paths.clinical_pipeline,
        ]
        .into_iter()
        .flatten()
        {
            anchor(p);
        }
        Ok(cfg)
    }

    /// Sets the master seed and propagates it.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.clinical.pipeline.linear.seed = seed;
        if let Some(g) = self.clinical.pipeline.grid_search.as_mut() {
            g.seed = seed;
        }
    }

    pub fn net(&self, role: SegRole) -> NetConfig {
        match role {
            SegRole::Anatomical => self.anatomical,
            SegRole::Pathological => self.pathological,
        }
    }

    pub fn unet_spec(&self, role: SegRole) -> UNetSpec {
        let n = self.net(role);
        UNetSpec {
            in_channels: n.in_channels,
            base_features: n.base_features,
            depth: n.depth,
            num_classes: role.num_classes(),
            input_size: self.preproc.target_h,
        }
    }

    pub fn checkpoint_path(&self, role: SegRole) -> PathBuf {
        let configured = match role {
            SegRole::Anatomical => &self.paths.anatomical_checkpoint,
            SegRole::Pathological => &self.paths.pathological_checkpoint,
        };
        configured
            .clone()
            .unwrap_or_else(|| self.output_dir.join(role.as_str()).join("model.ckpt"))
    }

    pub fn predictions_dir(&self) -> PathBuf {
        self.paths
            .predictions_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("predictions"))
    }

    pub fn pipeline_path(&self) -> PathBuf {
        self.paths
            .clinical_pipeline
            .clone()
            .unwrap_or_else(|| self.output_dir.join("clinical").join("pipeline.json"))
    }

    pub fn dataset_root(&self) -> CliResult<&Path> {
        let root = self
            .dataset
            .root
            .as_deref()
            .ok_or_else(|| CliError::config("dataset.root", "required but not set"))?;
        if !root.is_dir() {
            return Err(CliError::config(
                "dataset.root",
                format!("path does not exist or is not a directory: {}", root.display()),
            ));
        }
        Ok(root)
    }

    /// Semantic checks shared by every command.
    pub fn validate(&self) -> CliResult<()> {
        self.preproc.validate().map_err(at("preproc"))?;
        if self.preproc.target_w != self.preproc.target_h {
            return Err(CliError::config(
                "preproc.target_w",
                format!("must equal preproc.target_h ({})", self.preproc.target_h),
            ));
        }
        for role in [SegRole::Anatomical, SegRole::Pathological] {
            self.unet_spec(role).validate().map_err(at(role.as_str()))?;
        }
        self.train.validate().map_err(at("train"))?;
        loss_registry::<f32>()
            .create(&self.train.loss, &self.train.loss_config)
            .map_err(at("train.loss"))?;
        let split = self.dataset.split;
        if split.n_val != split.val_pathological + split.val_normal {
            return Err(CliError::config(
                "dataset.split.n_val",
                format!(
                    "{} != val_pathological {} + val_normal {}",
                    split.n_val, split.val_pathological, split.val_normal
                ),
            ));
        }
        self.clinical.pipeline.validate().map_err(at("clinical.pipeline"))?;
        kernel_registry()
            .create(&self.clinical.pipeline.svm.kernel, &KernelParams { gamma: 1.0 })
            .map_err(at("clinical.pipeline.svm.kernel"))?;
        if self.clinical.folds < 2 {
            return Err(CliError::config("clinical.folds", "must be at least 2"));
        }
        self.slice_rule.validate().map_err(at("slice_rule"))?;
        create_metrics(&self.evaluate.metrics).map_err(at("evaluate.metrics"))?;
        if self.evaluate.structures.is_empty() {
            return Err(CliError::config("evaluate.structures", "at least one structure is required"));
        }
        for (i, s) in self.evaluate.structures.iter().enumerate() {
            if s.labels.is_empty() || s.labels.iter().any(|&l| l > 4) {
                return Err(CliError::config(
                    format!("evaluate.structures[{i}].labels"),
                    "must be a non-empty subset of 0..=4",
                ));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
        cfg.validate().unwrap();
    }

    #[test]
    fn default_constants() {
        let cfg = RunConfig::default();
        let spec = cfg.unet_spec(SegRole::Pathological);
        assert_eq!((spec.input_size, spec.base_features, spec.depth, spec.num_classes), (256, 32, 4, 4));
        assert_eq!(cfg.unet_spec(SegRole::Anatomical).num_classes, 3);
        assert_eq!((cfg.train.max_epochs, cfg.train.early_stop_patience), (500, 200));
        assert_eq!(cfg.train.lr, 1e-3);
        assert_eq!(cfg.clinical.folds, 5);
        assert_eq!(cfg.slice_rule.min_pathological_slices, 2);
    }

    #[test]
    fn bad_value_names_its_field() {
        let err = RunConfig::from_toml("[train]\nmax_epochs = \"ten\"\n").unwrap_err();
        match err {
            CliError::Config { field, .. } => assert_eq!(field, "train.max_epochs"),
            other => panic!("{other:?}"),
        }
        let err = RunConfig::from_toml("[anatomical]\nwidth = 3\n").unwrap_err();
        assert!(matches!(err, CliError::Config { ref field, .. } if field.starts_with("anatomical")), "{err:?}");
    }

    #[test]
    fn semantic_errors_name_their_field() {
        let mut cfg = RunConfig::default();
        cfg.train.loss = "hinge".into();
        assert!(matches!(cfg.validate(), Err(CliError::Config { field, .. }) if field == "train.loss"));
        let mut cfg = RunConfig::default();
        cfg.preproc.target_w = 128;
        assert!(matches!(cfg.validate(), Err(CliError::Config { field, .. }) if field == "preproc.target_w"));
        let mut cfg = RunConfig::default();
        cfg.dataset.split.n_val = 3;
        assert!(matches!(cfg.validate(), Err(CliError::Config { field, .. }) if field == "dataset.split.n_val"));
        let mut cfg = RunConfig::default();
        cfg.dataset.root = Some(PathBuf::from("/definitely/not/here"));
        assert!(matches!(cfg.dataset_root(), Err(CliError::Config { field, .. }) if field == "dataset.root"));
    }

    #[test]
    fn seed_propagates() {
        let mut cfg = RunConfig::default();
        cfg.set_seed(9);
        assert_eq!((cfg.train.seed, cfg.clinical.pipeline.linear.seed), (9, 9));
    }
}
